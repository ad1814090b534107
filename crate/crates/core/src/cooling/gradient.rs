use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::landcover::{LulcCategory, LulcLegend};
use crate::raster::{ensure_aligned, GeoGrid, PixelMask, DEFAULT_NODATA};
use crate::stats::nearest_rank;

/// Box-filter mean of `mask` over a `window × window` neighbourhood.
/// Near the edges only in-bounds pixels are averaged.
pub fn built_fraction(mask: &PixelMask, window: usize) -> Result<GeoGrid> {
    if window == 0 || window.is_multiple_of(2) {
        return Err(Error::InvalidParameter(format!(
            "window {window} must be odd"
        )));
    }
    let spec = *mask.spec();
    let (w, h) = (spec.width, spec.height);
    // summed-area table with a zero row and column
    let mut sat = vec![0u32; (w + 1) * (h + 1)];
    for r in 0..h {
        let mut row_sum = 0u32;
        for c in 0..w {
            row_sum += mask.get(c, r) as u32;
            sat[(r + 1) * (w + 1) + c + 1] = sat[r * (w + 1) + c + 1] + row_sum;
        }
    }
    let half = window / 2;
    GeoGrid::from_fn(spec, DEFAULT_NODATA, |c, r| {
        let (c0, c1) = (c.saturating_sub(half), (c + half + 1).min(w));
        let (r0, r1) = (r.saturating_sub(half), (r + half + 1).min(h));
        let s = sat[r1 * (w + 1) + c1] + sat[r0 * (w + 1) + c0]
            - sat[r0 * (w + 1) + c1]
            - sat[r1 * (w + 1) + c0];
        let area = ((c1 - c0) * (r1 - r0)) as f64;
        Some((s as f64 / area) as f32)
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum GradientAxis {
    /// Ten built-fraction bins `[0, 0.1), ..., [0.9, 1.0]`.
    BuiltFractionDecile,
    /// Distance from the built-fraction-weighted centroid.
    RadialDistance { bin_width: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UrbanGradient {
    pub axis: GradientAxis,
    pub bin_edges: Vec<f64>,
    pub bin_centers: Vec<f64>,
    pub mean_anomaly: Vec<Option<f64>>,
    pub count: Vec<u64>,
    /// World coordinates of the centroid for the radial axis.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub centroid: Option<(f64, f64)>,
}

// absorbs f32 storage error so that e.g. 0.7f32 lands in [0.7, 0.8)
const DECILE_EPS: f64 = 1e-6;

fn decile_bin(bf: f64) -> Option<usize> {
    if !(-DECILE_EPS..=1.0 + DECILE_EPS).contains(&bf) {
        return None;
    }
    Some(((bf * 10.0 + DECILE_EPS).floor().max(0.0) as usize).min(9))
}

/// Mean anomaly per built-fraction decile or radial distance bin.
pub fn urban_gradient(
    dt: &GeoGrid,
    built_fraction: &GeoGrid,
    axis: GradientAxis,
) -> Result<UrbanGradient> {
    ensure_aligned(dt, built_fraction)?;
    let spec = *dt.spec();
    let (edges, centroid, bin_of): (
        Vec<f64>,
        Option<(f64, f64)>,
        Box<dyn Fn(usize, f64) -> Option<usize>>,
    ) = match axis {
        GradientAxis::BuiltFractionDecile => (
            (0..=10).map(|k| k as f64 / 10.0).collect(),
            None,
            Box::new(|_, bf| decile_bin(bf)),
        ),
        GradientAxis::RadialDistance { bin_width } => {
            if !(bin_width > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "radial bin width {bin_width} must be positive"
                )));
            }
            let (mut sx, mut sy, mut sw) = (0.0, 0.0, 0.0);
            for (i, bf) in built_fraction.iter().enumerate() {
                if let Some(bf) = bf {
                    let (x, y) = spec.pixel_center(i % spec.width, i / spec.width);
                    sx += bf as f64 * x;
                    sy += bf as f64 * y;
                    sw += bf as f64;
                }
            }
            if sw <= 0.0 {
                return Err(Error::DegenerateMask(
                    "no built mass for a radial gradient".into(),
                ));
            }
            let (cx, cy) = (sx / sw, sy / sw);
            let dist = move |i: usize| {
                let (x, y) = spec.pixel_center(i % spec.width, i / spec.width);
                (x - cx).hypot(y - cy)
            };
            let max = (0..spec.len()).map(dist).fold(0.0, f64::max);
            let nb = (max / bin_width).floor() as usize + 1;
            (
                (0..=nb).map(|k| k as f64 * bin_width).collect(),
                Some((cx, cy)),
                Box::new(move |i, _| Some(((dist(i) / bin_width).floor() as usize).min(nb - 1))),
            )
        }
    };
    let nb = edges.len() - 1;
    let mut sum = vec![0.0f64; nb];
    let mut count = vec![0u64; nb];
    for (i, (t, bf)) in dt.iter().zip(built_fraction.iter()).enumerate() {
        let (Some(t), Some(bf)) = (t, bf) else {
            continue;
        };
        if let Some(b) = bin_of(i, bf as f64) {
            sum[b] += t as f64;
            count[b] += 1;
        }
    }
    Ok(UrbanGradient {
        axis,
        bin_centers: edges.windows(2).map(|w| (w[0] + w[1]) / 2.0).collect(),
        bin_edges: edges,
        mean_anomaly: (0..nb)
            .map(|k| (count[k] > 0).then(|| sum[k] / count[k] as f64))
            .collect(),
        count,
        centroid,
    })
}

/// Mean LST over pixels with built fraction `<= max_built_fraction`.
pub fn rural_reference(
    lst: &GeoGrid,
    built_fraction: &GeoGrid,
    max_built_fraction: f64,
) -> Result<f64> {
    ensure_aligned(lst, built_fraction)?;
    let (s, n) = lst
        .iter()
        .zip(built_fraction.iter())
        .filter_map(|(t, bf)| (bf? as f64 <= max_built_fraction).then_some(t?))
        .fold((0.0, 0usize), |(s, n), t| (s + t as f64, n + 1));
    if n == 0 {
        return Err(Error::Baseline(format!(
            "no pixel with built fraction <= {max_built_fraction}"
        )));
    }
    Ok(s / n as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SourceSinkRow {
    pub source_fraction: f64,
    pub neutral_fraction: f64,
    pub sink_fraction: f64,
    pub mean_anomaly: f64,
    pub pixel_count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceSinkTable {
    pub quantiles: (f64, f64),
    /// Pixels strictly below this anomaly are sinks.
    pub low_threshold: f64,
    /// Pixels strictly above this anomaly are sources.
    pub high_threshold: f64,
    pub categories: BTreeMap<LulcCategory, SourceSinkRow>,
}

/// Cross-tabulates anomaly quantile classes against land cover.
///
/// Thresholds are nearest-rank quantiles over pixels with a valid anomaly
/// and a land-cover code known to `legend`.
pub fn source_sink(
    dt: &GeoGrid,
    lulc: &GeoGrid,
    legend: &LulcLegend,
    quantiles: (f64, f64),
) -> Result<SourceSinkTable> {
    ensure_aligned(dt, lulc)?;
    let (lo_q, hi_q) = quantiles;
    if !(0.0..=1.0).contains(&lo_q) || !(0.0..=1.0).contains(&hi_q) || lo_q > hi_q {
        return Err(Error::InvalidParameter(format!(
            "bad quantile pair ({lo_q}, {hi_q})"
        )));
    }
    let pixels: Vec<(LulcCategory, f64)> = dt
        .iter()
        .zip(lulc.iter())
        .filter_map(|(t, c)| Some((legend.category(c? as i32)?, t? as f64)))
        .collect();
    if pixels.is_empty() {
        return Err(Error::InvalidParameter(
            "no pixel with both anomaly and land cover".into(),
        ));
    }
    let mut sorted: Vec<f64> = pixels.iter().map(|p| p.1).collect();
    sorted.sort_by(f64::total_cmp);
    let low = nearest_rank(&sorted, lo_q);
    let high = nearest_rank(&sorted, hi_q);

    let mut acc: BTreeMap<LulcCategory, (u64, u64, u64, f64)> = BTreeMap::new();
    for &(cat, t) in &pixels {
        let e = acc.entry(cat).or_default();
        if t < low {
            e.0 += 1;
        } else if t > high {
            e.2 += 1;
        } else {
            e.1 += 1;
        }
        e.3 += t;
    }
    let categories = acc
        .into_iter()
        .map(|(cat, (sink, neutral, source, sum))| {
            let n = sink + neutral + source;
            let nf = n as f64;
            (
                cat,
                SourceSinkRow {
                    sink_fraction: sink as f64 / nf,
                    neutral_fraction: neutral as f64 / nf,
                    source_fraction: source as f64 / nf,
                    mean_anomaly: sum / nf,
                    pixel_count: n,
                },
            )
        })
        .collect();
    Ok(SourceSinkTable {
        quantiles,
        low_threshold: low,
        high_threshold: high,
        categories,
    })
}
