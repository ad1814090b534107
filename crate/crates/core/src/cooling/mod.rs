//! Cooling anomalies, park cooling profiles, urban gradients and source/sink tables.

mod gradient;
mod profile;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::landcover::{DistanceField, ParkSet};
use crate::raster::{ensure_aligned, GeoGrid, PixelMask};

pub use gradient::{
    built_fraction, rural_reference, source_sink, urban_gradient, GradientAxis, SourceSinkRow,
    SourceSinkTable, UrbanGradient,
};
pub use profile::{
    aggregate_profiles, bin_edges, bin_index, cooling_profile, CoolingProfile, ProfileSide,
};

use profile::BinSamples;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineFallback {
    CitywideBuilt,
    Error,
}

/// Ring of built pixels around a park that defines its reference temperature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BaselineSpec {
    pub ring_inner: f64,
    pub ring_outer: f64,
    pub min_pixels: usize,
    pub fallback: BaselineFallback,
}

impl Default for BaselineSpec {
    fn default() -> Self {
        BaselineSpec {
            ring_inner: 500.0,
            ring_outer: 1000.0,
            min_pixels: 50,
            fallback: BaselineFallback::CitywideBuilt,
        }
    }
}

impl BaselineSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.ring_inner > 0.0
            && self.ring_inner < self.ring_outer
            && self.ring_outer.is_finite())
        {
            return Err(Error::InvalidParameter(format!(
                "baseline ring needs 0 < inner < outer, got [{}, {}]",
                self.ring_inner, self.ring_outer
            )));
        }
        Ok(())
    }

    pub fn in_ring(&self, d: f64) -> bool {
        d >= self.ring_inner && d <= self.ring_outer
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselineOutcome {
    pub value: f64,
    pub pixels: usize,
    pub used_fallback: bool,
}

fn mean_of(values: impl Iterator<Item = f64>) -> Option<(f64, usize)> {
    let (s, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| (s / n as f64, n))
}

fn resolve_baseline(
    ring: Option<(f64, usize)>,
    citywide: impl FnOnce() -> Option<(f64, usize)>,
    spec: &BaselineSpec,
) -> Result<BaselineOutcome> {
    match ring {
        Some((value, pixels)) if pixels >= spec.min_pixels => Ok(BaselineOutcome {
            value,
            pixels,
            used_fallback: false,
        }),
        _ => {
            let found = ring.map_or(0, |r| r.1);
            match spec.fallback {
                BaselineFallback::Error => Err(Error::Baseline(format!(
                    "ring holds {found} built pixels, need {}",
                    spec.min_pixels
                ))),
                BaselineFallback::CitywideBuilt => citywide()
                    .map(|(value, pixels)| BaselineOutcome {
                        value,
                        pixels,
                        used_fallback: true,
                    })
                    .ok_or_else(|| {
                        Error::Baseline(format!(
                            "ring holds {found} built pixels and no built pixel has a valid temperature"
                        ))
                    }),
            }
        }
    }
}

/// Mean LST over built pixels within the ring, with fallback.
pub fn builtup_baseline_detail(
    lst: &GeoGrid,
    built: &PixelMask,
    park_outside_dist: &GeoGrid,
    spec: &BaselineSpec,
) -> Result<BaselineOutcome> {
    spec.validate()?;
    ensure_aligned(lst, built)?;
    ensure_aligned(lst, park_outside_dist)?;
    let ring = mean_of(
        lst.iter()
            .zip(park_outside_dist.iter())
            .enumerate()
            .filter_map(|(i, (t, d))| {
                (built.at(i) && d.is_some_and(|d| spec.in_ring(d as f64))).then_some(t)?
            })
            .map(|t| t as f64),
    );
    resolve_baseline(ring, || citywide_built_mean(lst, built), spec)
}

pub fn builtup_baseline(
    lst: &GeoGrid,
    built: &PixelMask,
    park_outside_dist: &GeoGrid,
    spec: &BaselineSpec,
) -> Result<f64> {
    builtup_baseline_detail(lst, built, park_outside_dist, spec).map(|b| b.value)
}

fn citywide_built_mean(lst: &GeoGrid, built: &PixelMask) -> Option<(f64, usize)> {
    mean_of(
        lst.iter()
            .enumerate()
            .filter_map(|(i, t)| built.at(i).then_some(t)?)
            .map(|t| t as f64),
    )
}

/// `lst - baseline` per pixel.
pub fn anomaly(lst: &GeoGrid, baseline: f64) -> Result<GeoGrid> {
    lst.map(|v| Some((v as f64 - baseline) as f32))
}

/// Bin layout for internal and spillover profiles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProfileBins {
    pub bin_width: f64,
    pub internal_max: f64,
    pub spillover_max: f64,
}

impl Default for ProfileBins {
    fn default() -> Self {
        ProfileBins {
            bin_width: 30.0,
            internal_max: 300.0,
            spillover_max: 300.0,
        }
    }
}

/// Per-park and pooled cooling profiles for one LST field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParkCooling {
    pub baselines: BTreeMap<u32, BaselineOutcome>,
    pub internal_by_park: BTreeMap<u32, CoolingProfile>,
    pub spillover_by_park: BTreeMap<u32, CoolingProfile>,
    pub internal: CoolingProfile,
    pub spillover: CoolingProfile,
}

impl ParkCooling {
    pub fn profile(&self, side: ProfileSide) -> &CoolingProfile {
        match side {
            ProfileSide::Internal => &self.internal,
            ProfileSide::Spillover => &self.spillover,
        }
    }
}

/// Per-park cooling analysis.
///
/// Every non-park pixel belongs to its nearest park. A park's baseline is
/// the mean LST of the built pixels it owns whose distance lies in the ring;
/// its internal profile bins its own pixels by inside distance and its
/// spillover profile bins the built pixels it owns by outside distance.
pub fn park_cooling(
    lst: &GeoGrid,
    parks: &ParkSet,
    field: &DistanceField,
    built: &PixelMask,
    baseline: &BaselineSpec,
    bins: &ProfileBins,
) -> Result<ParkCooling> {
    baseline.validate()?;
    ensure_aligned(lst, built)?;
    ensure_aligned(lst, &field.outside)?;
    ensure_aligned(lst, parks.source_mask.spec())?;
    let internal_edges = bin_edges(bins.bin_width, bins.internal_max)?;
    let spill_edges = bin_edges(bins.bin_width, bins.spillover_max)?;
    let n = lst.spec().len();

    let mut ring: BTreeMap<u32, (f64, usize)> = BTreeMap::new();
    for i in 0..n {
        if parks.labels[i] != 0 || !built.at(i) {
            continue;
        }
        let (Some(t), Some(d)) = (lst.at(i), field.outside.at(i)) else {
            continue;
        };
        if baseline.in_ring(d as f64) {
            let e = ring.entry(field.nearest_park[i]).or_default();
            e.0 += t as f64;
            e.1 += 1;
        }
    }
    let citywide = citywide_built_mean(lst, built);
    let mut baselines = BTreeMap::new();
    for &id in parks.park_areas.keys() {
        let r = ring.get(&id).map(|&(s, c)| (s / c as f64, c));
        baselines.insert(id, resolve_baseline(r, || citywide, baseline)?);
    }

    let mut internal: BTreeMap<u32, BinSamples> = BTreeMap::new();
    let mut spill: BTreeMap<u32, BinSamples> = BTreeMap::new();
    for i in 0..n {
        let Some(t) = lst.at(i) else { continue };
        let label = parks.labels[i];
        if label != 0 {
            let Some(d) = field.inside.at(i) else {
                continue;
            };
            if let Some(b) = bin_index(&internal_edges, d as f64) {
                let dt = t as f64 - baselines[&label].value;
                internal.entry(label).or_default().push(b, dt, d as f64);
            }
        } else if built.at(i) {
            let Some(d) = field.outside.at(i) else {
                continue;
            };
            if let Some(b) = bin_index(&spill_edges, d as f64) {
                let owner = field.nearest_park[i];
                let dt = t as f64 - baselines[&owner].value;
                spill.entry(owner).or_default().push(b, dt, d as f64);
            }
        }
    }

    let finish = |mut m: BTreeMap<u32, BinSamples>, side, edges: &[f64]| {
        parks
            .park_areas
            .keys()
            .map(|id| {
                (
                    *id,
                    m.remove(id).unwrap_or_default().into_profile(side, edges),
                )
            })
            .collect::<BTreeMap<_, _>>()
    };
    let internal_by_park = finish(internal, ProfileSide::Internal, &internal_edges);
    let spillover_by_park = finish(spill, ProfileSide::Spillover, &spill_edges);
    let pool = |m: &BTreeMap<u32, CoolingProfile>, side, edges: &[f64]| {
        if m.is_empty() {
            Ok(CoolingProfile::empty(side, edges.to_vec()))
        } else {
            aggregate_profiles(&m.values().cloned().collect::<Vec<_>>())
        }
    };
    Ok(ParkCooling {
        internal: pool(&internal_by_park, ProfileSide::Internal, &internal_edges)?,
        spillover: pool(&spillover_by_park, ProfileSide::Spillover, &spill_edges)?,
        baselines,
        internal_by_park,
        spillover_by_park,
    })
}

/// Pools per-scene results park by park and overall.
pub fn aggregate_park_cooling(scenes: &[ParkCooling]) -> Result<ParkCooling> {
    let first = scenes
        .first()
        .ok_or_else(|| Error::InvalidParameter("no scenes to aggregate".into()))?;
    let pool = |side: ProfileSide| -> Result<BTreeMap<u32, CoolingProfile>> {
        let pick = |s: &ParkCooling| match side {
            ProfileSide::Internal => s.internal_by_park.clone(),
            ProfileSide::Spillover => s.spillover_by_park.clone(),
        };
        let mut out = BTreeMap::new();
        for id in pick(first).keys() {
            let ps: Vec<CoolingProfile> = scenes
                .iter()
                .map(|s| pick(s).remove(id).ok_or(Error::BinMismatch))
                .collect::<Result<_>>()?;
            out.insert(*id, aggregate_profiles(&ps)?);
        }
        Ok(out)
    };
    // baselines differ per scene; report the count-weighted mean
    let mut baselines = BTreeMap::new();
    for id in first.baselines.keys() {
        let (mut s, mut n, mut fb) = (0.0, 0usize, false);
        for sc in scenes {
            let b = sc.baselines.get(id).ok_or(Error::BinMismatch)?;
            s += b.value * b.pixels as f64;
            n += b.pixels;
            fb |= b.used_fallback;
        }
        baselines.insert(
            *id,
            BaselineOutcome {
                value: if n > 0 { s / n as f64 } else { f64::NAN },
                pixels: n,
                used_fallback: fb,
            },
        );
    }
    let all = |f: fn(&ParkCooling) -> &CoolingProfile| {
        aggregate_profiles(&scenes.iter().map(|s| f(s).clone()).collect::<Vec<_>>())
    };
    Ok(ParkCooling {
        baselines,
        internal_by_park: pool(ProfileSide::Internal)?,
        spillover_by_park: pool(ProfileSide::Spillover)?,
        internal: all(|s| &s.internal)?,
        spillover: all(|s| &s.spillover)?,
    })
}
