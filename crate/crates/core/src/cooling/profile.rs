use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{ensure_aligned, GeoGrid, PixelMask};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProfileSide {
    Internal,
    Spillover,
}

impl ProfileSide {
    pub fn name(self) -> &'static str {
        match self {
            ProfileSide::Internal => "internal",
            ProfileSide::Spillover => "spillover",
        }
    }
}

impl std::str::FromStr for ProfileSide {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "internal" => Ok(ProfileSide::Internal),
            "spillover" => Ok(ProfileSide::Spillover),
            _ => Err(Error::InvalidParameter(format!(
                "unknown profile side `{s}`"
            ))),
        }
    }
}

/// Distance-binned ΔT statistics. Empty bins hold `None` for every statistic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoolingProfile {
    pub side: ProfileSide,
    /// Ascending bin edges in metres; bin `k` is `[edges[k], edges[k+1])`.
    pub bin_edges: Vec<f64>,
    pub mean_dt: Vec<Option<f64>>,
    /// Population standard deviation of ΔT per bin.
    pub std_dt: Vec<Option<f64>>,
    /// Mean distance of the pixels in each bin.
    pub mean_dist: Vec<Option<f64>>,
    pub count: Vec<u64>,
}

/// `0, w, 2w, ...` up to `max_dist`; the last edge is clamped to `max_dist`.
pub fn bin_edges(bin_width: f64, max_dist: f64) -> Result<Vec<f64>> {
    if !(bin_width > 0.0 && bin_width.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "bin width {bin_width} must be positive"
        )));
    }
    if !(max_dist > 0.0 && max_dist.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "max distance {max_dist} must be positive"
        )));
    }
    let mut edges = vec![0.0];
    let mut k = 1u64;
    loop {
        let e = k as f64 * bin_width;
        if e >= max_dist - 1e-9 * max_dist {
            edges.push(max_dist);
            break;
        }
        edges.push(e);
        k += 1;
    }
    Ok(edges)
}

/// Index of the bin containing `d`, if any.
pub fn bin_index(edges: &[f64], d: f64) -> Option<usize> {
    if !(d >= edges[0]) || d >= *edges.last()? {
        return None;
    }
    // partition_point: first edge strictly greater than d
    Some(edges.partition_point(|&e| e <= d) - 1)
}

/// Two-pass accumulator over `(bin, dt, dist)` samples.
#[derive(Debug, Clone, Default)]
pub(crate) struct BinSamples {
    samples: Vec<(u32, f64, f64)>,
}

impl BinSamples {
    pub fn push(&mut self, bin: usize, dt: f64, dist: f64) {
        self.samples.push((bin as u32, dt, dist));
    }

    pub fn into_profile(self, side: ProfileSide, edges: &[f64]) -> CoolingProfile {
        let nb = edges.len() - 1;
        let mut n = vec![0u64; nb];
        let mut sum = vec![0.0f64; nb];
        let mut dsum = vec![0.0f64; nb];
        for &(b, dt, d) in &self.samples {
            n[b as usize] += 1;
            sum[b as usize] += dt;
            dsum[b as usize] += d;
        }
        let mean: Vec<Option<f64>> = (0..nb)
            .map(|k| (n[k] > 0).then(|| sum[k] / n[k] as f64))
            .collect();
        let mut m2 = vec![0.0f64; nb];
        for &(b, dt, _) in &self.samples {
            let dev = dt - mean[b as usize].unwrap();
            m2[b as usize] += dev * dev;
        }
        CoolingProfile {
            side,
            bin_edges: edges.to_vec(),
            std_dt: (0..nb)
                .map(|k| (n[k] > 0).then(|| (m2[k] / n[k] as f64).sqrt()))
                .collect(),
            mean_dist: (0..nb)
                .map(|k| (n[k] > 0).then(|| dsum[k] / n[k] as f64))
                .collect(),
            mean_dt: mean,
            count: n,
        }
    }
}

/// Bins the ΔT of `domain` pixels by `dist`. Pixels with nodata ΔT or
/// distance, or distance beyond `max_dist`, are skipped.
pub fn cooling_profile(
    dt: &GeoGrid,
    dist: &GeoGrid,
    domain: &PixelMask,
    side: ProfileSide,
    bin_width: f64,
    max_dist: f64,
) -> Result<CoolingProfile> {
    ensure_aligned(dt, dist)?;
    ensure_aligned(dt, domain)?;
    let edges = bin_edges(bin_width, max_dist)?;
    let mut acc = BinSamples::default();
    for (i, (t, d)) in dt.iter().zip(dist.iter()).enumerate() {
        if !domain.at(i) {
            continue;
        }
        if let (Some(t), Some(d)) = (t, d) {
            if let Some(b) = bin_index(&edges, d as f64) {
                acc.push(b, t as f64, d as f64);
            }
        }
    }
    Ok(acc.into_profile(side, &edges))
}

impl CoolingProfile {
    pub fn empty(side: ProfileSide, edges: Vec<f64>) -> Self {
        let nb = edges.len() - 1;
        CoolingProfile {
            side,
            bin_edges: edges,
            mean_dt: vec![None; nb],
            std_dt: vec![None; nb],
            mean_dist: vec![None; nb],
            count: vec![0; nb],
        }
    }

    pub fn bins(&self) -> usize {
        self.count.len()
    }

    pub fn total_count(&self) -> u64 {
        self.count.iter().sum()
    }

    pub fn bin_centers(&self) -> Vec<f64> {
        self.bin_edges
            .windows(2)
            .map(|w| (w[0] + w[1]) / 2.0)
            .collect()
    }

    pub fn same_bins(&self, other: &CoolingProfile) -> bool {
        self.side == other.side && self.bin_edges == other.bin_edges
    }

    /// Adds `c` to every populated bin mean.
    pub fn shifted(&self, c: f64) -> CoolingProfile {
        CoolingProfile {
            mean_dt: self.mean_dt.iter().map(|m| m.map(|m| m + c)).collect(),
            ..self.clone()
        }
    }
}

/// Count-weighted pooling of profiles with identical bins.
///
/// Means combine as `Σ nᵢ mᵢ / N`; variances as
/// `Σ nᵢ (sᵢ² + (mᵢ − M)²) / N`, the exact population variance of the
/// pooled samples.
pub fn aggregate_profiles(profiles: &[CoolingProfile]) -> Result<CoolingProfile> {
    let first = profiles
        .first()
        .ok_or_else(|| Error::InvalidParameter("no profiles to aggregate".into()))?;
    if profiles.iter().any(|p| !p.same_bins(first)) {
        return Err(Error::BinMismatch);
    }
    let mut out = CoolingProfile::empty(first.side, first.bin_edges.clone());
    for k in 0..first.bins() {
        let n: u64 = profiles.iter().map(|p| p.count[k]).sum();
        if n == 0 {
            continue;
        }
        let nf = n as f64;
        let populated = || profiles.iter().filter(|p| p.count[k] > 0);
        let mean = populated()
            .map(|p| p.count[k] as f64 * p.mean_dt[k].unwrap())
            .sum::<f64>()
            / nf;
        let var = populated()
            .map(|p| {
                let (s, m) = (p.std_dt[k].unwrap(), p.mean_dt[k].unwrap());
                p.count[k] as f64 * (s * s + (m - mean) * (m - mean))
            })
            .sum::<f64>()
            / nf;
        let dist = populated()
            .map(|p| p.count[k] as f64 * p.mean_dist[k].unwrap())
            .sum::<f64>()
            / nf;
        out.count[k] = n;
        out.mean_dt[k] = Some(mean);
        out.std_dt[k] = Some(var.max(0.0).sqrt());
        out.mean_dist[k] = Some(dist);
    }
    Ok(out)
}
