//! Greening what-if: rasterize a polygon, swap its built pixels to a donor
//! land-cover signature, re-predict and compare.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::config::DonorStatistic;
use crate::cooling::{park_cooling, BaselineSpec, CoolingProfile, ProfileBins, ProfileSide};
use crate::error::{Error, Result};
use crate::landcover::{category_mask, DistanceField, LulcCategory, LulcLegend, ParkSet};
use crate::predictor::Predictor;
use crate::raster::{ensure_aligned, GeoGrid, GridSpec, PixelMask};
use crate::stats::{mean_std, median_sorted};
use crate::workspace::{SceneStack, REFLECTANCE_BANDS};

/// Closed ring of world-coordinate vertices. A repeated closing vertex is
/// accepted and dropped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Polygon {
    pub vertices: Vec<[f64; 2]>,
}

fn cross(o: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

fn on_segment(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> bool {
    cross(a, b, p) == 0.0
        && p[0] >= a[0].min(b[0])
        && p[0] <= a[0].max(b[0])
        && p[1] >= a[1].min(b[1])
        && p[1] <= a[1].max(b[1])
}

fn segments_intersect(a: [f64; 2], b: [f64; 2], c: [f64; 2], d: [f64; 2]) -> bool {
    let d1 = cross(c, d, a);
    let d2 = cross(c, d, b);
    let d3 = cross(a, b, c);
    let d4 = cross(a, b, d);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    on_segment(a, c, d) || on_segment(b, c, d) || on_segment(c, a, b) || on_segment(d, a, b)
}

impl Polygon {
    pub fn new(vertices: Vec<[f64; 2]>) -> Result<Self> {
        let p = Polygon { vertices };
        p.validate()?;
        Ok(p)
    }

    /// Axis-aligned rectangle with corners `(x0, y0)` and `(x1, y1)`.
    pub fn rectangle(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Polygon {
            vertices: vec![[x0, y0], [x1, y0], [x1, y1], [x0, y1]],
        }
    }

    /// Vertices without a repeated closing vertex.
    pub fn ring(&self) -> &[[f64; 2]] {
        match self.vertices.as_slice() {
            [first, .., last] if first == last => &self.vertices[..self.vertices.len() - 1],
            v => v,
        }
    }

    pub fn signed_area(&self) -> f64 {
        let r = self.ring();
        (0..r.len())
            .map(|i| {
                let (a, b) = (r[i], r[(i + 1) % r.len()]);
                a[0] * b[1] - b[0] * a[1]
            })
            .sum::<f64>()
            / 2.0
    }

    pub fn validate(&self) -> Result<()> {
        let r = self.ring();
        if r.len() < 3 {
            return Err(Error::InvalidPolygon(format!(
                "{} distinct vertices, need at least 3",
                r.len()
            )));
        }
        if r.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidPolygon("non-finite vertex".into()));
        }
        let n = r.len();
        for i in 0..n {
            if r[i] == r[(i + 1) % n] {
                return Err(Error::InvalidPolygon(format!("repeated vertex at {i}")));
            }
        }
        for i in 0..n {
            for j in i + 1..n {
                // adjacent edges share a vertex by construction
                if j == i + 1 || (i == 0 && j == n - 1) {
                    continue;
                }
                if segments_intersect(r[i], r[(i + 1) % n], r[j], r[(j + 1) % n]) {
                    return Err(Error::InvalidPolygon(format!(
                        "edges {i} and {j} intersect"
                    )));
                }
            }
        }
        if self.signed_area() == 0.0 {
            return Err(Error::InvalidPolygon("zero area".into()));
        }
        Ok(())
    }

    /// Even-odd test; points on an edge count as inside.
    pub fn contains(&self, p: [f64; 2]) -> bool {
        let r = self.ring();
        let n = r.len();
        let mut inside = false;
        for i in 0..n {
            let (a, b) = (r[i], r[(i + 1) % n]);
            if on_segment(p, a, b) {
                return true;
            }
            if (a[1] > p[1]) != (b[1] > p[1]) {
                let x = a[0] + (p[1] - a[1]) / (b[1] - a[1]) * (b[0] - a[0]);
                if p[0] < x {
                    inside = !inside;
                }
            }
        }
        inside
    }
}

/// Pixels whose centre lies inside the polygon or on its boundary.
pub fn rasterize_polygon(poly: &Polygon, grid: &GridSpec) -> Result<PixelMask> {
    poly.validate()?;
    let r = poly.ring();
    let (xmin, xmax) = r
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
            (lo.min(v[0]), hi.max(v[0]))
        });
    let (ymin, ymax) = r
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
            (lo.min(v[1]), hi.max(v[1]))
        });
    let ps = grid.pixel_size;
    let col_lo = (((xmin - grid.origin_x) / ps - 0.5).floor().max(0.0)) as usize;
    let col_hi = (((xmax - grid.origin_x) / ps - 0.5).ceil().max(-1.0) + 1.0).min(grid.width as f64)
        as usize;
    let row_lo = (((grid.origin_y - ymax) / ps - 0.5).floor().max(0.0)) as usize;
    let row_hi = (((grid.origin_y - ymin) / ps - 0.5).ceil().max(-1.0) + 1.0)
        .min(grid.height as f64) as usize;
    let mut mask = PixelMask::empty(*grid);
    for row in row_lo..row_hi {
        for col in col_lo..col_hi {
            let (x, y) = grid.pixel_center(col, row);
            if poly.contains([x, y]) {
                mask.set(col, row, true);
            }
        }
    }
    Ok(mask)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DonorSignature {
    pub category: LulcCategory,
    pub statistic: DonorStatistic,
    /// Per reflectance band, in `REFLECTANCE_BANDS` order.
    pub center: Vec<f64>,
    pub std: Vec<f64>,
    pub pixels: usize,
    /// NDVI range over the donor population.
    pub ndvi_range: (f64, f64),
}

/// Per-band statistics over pixels of `category` that are not excluded
/// and have every reflectance band valid.
pub fn donor_signature(
    stack: &SceneStack,
    lulc: &GeoGrid,
    legend: &LulcLegend,
    category: LulcCategory,
    statistic: DonorStatistic,
    min_pixels: usize,
    exclude: Option<&PixelMask>,
) -> Result<DonorSignature> {
    ensure_aligned(stack, lulc)?;
    let code = legend.require(category)?;
    let bands = REFLECTANCE_BANDS
        .iter()
        .map(|b| stack.channel(b))
        .collect::<Result<Vec<_>>>()?;
    let (nir, red) = (3, 2);
    let mut samples: Vec<Vec<f64>> = vec![Vec::new(); bands.len()];
    let mut ndvi_lo = f64::INFINITY;
    let mut ndvi_hi = f64::NEG_INFINITY;
    for i in 0..lulc.spec().len() {
        if lulc.at(i) != Some(code) || exclude.is_some_and(|m| m.at(i)) {
            continue;
        }
        let Some(v) = bands
            .iter()
            .map(|b| b.at(i).map(f64::from))
            .collect::<Option<Vec<f64>>>()
        else {
            continue;
        };
        if v[nir] + v[red] != 0.0 {
            let nd = (v[nir] - v[red]) / (v[nir] + v[red]);
            ndvi_lo = ndvi_lo.min(nd);
            ndvi_hi = ndvi_hi.max(nd);
        }
        for (s, x) in samples.iter_mut().zip(v) {
            s.push(x);
        }
    }
    let found = samples[0].len();
    if found < min_pixels.max(1) {
        return Err(Error::InsufficientDonors {
            found,
            required: min_pixels.max(1),
        });
    }
    let mut center = Vec::with_capacity(bands.len());
    let mut std = Vec::with_capacity(bands.len());
    for mut s in samples {
        let (m, sd) = mean_std(&s).expect("non-empty");
        std.push(sd);
        center.push(match statistic {
            DonorStatistic::Mean => m,
            DonorStatistic::Median => {
                s.sort_by(f64::total_cmp);
                median_sorted(&s)
            }
        });
    }
    Ok(DonorSignature {
        category,
        statistic,
        center,
        std,
        pixels: found,
        ndvi_range: (ndvi_lo, ndvi_hi),
    })
}

fn default_target() -> LulcCategory {
    LulcCategory::Trees
}

fn default_jitter_scale() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterventionSpec {
    pub polygon: Polygon,
    #[serde(default = "default_target")]
    pub target_category: LulcCategory,
    #[serde(default)]
    pub statistic: DonorStatistic,
    /// Explicit per-band jitter; when absent, `jitter_scale` × donor std.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jitter_std: Option<Vec<f64>>,
    #[serde(default = "default_jitter_scale")]
    pub jitter_scale: f64,
    #[serde(default)]
    pub seed: u64,
}

impl InterventionSpec {
    pub fn new(polygon: Polygon) -> Self {
        InterventionSpec {
            polygon,
            target_category: default_target(),
            statistic: DonorStatistic::Median,
            jitter_std: None,
            jitter_scale: default_jitter_scale(),
            seed: 0,
        }
    }

    pub fn without_jitter(mut self) -> Self {
        self.jitter_std = None;
        self.jitter_scale = 0.0;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.polygon.validate()?;
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if !(self.jitter_scale >= 0.0 && self.jitter_scale.is_finite()) {
            return bad(format!(
                "jitter_scale must be finite and non-negative, got {}",
                self.jitter_scale
            ));
        }
        if let Some(j) = &self.jitter_std {
            if j.len() != REFLECTANCE_BANDS.len() {
                return bad(format!(
                    "jitter_std needs {} values",
                    REFLECTANCE_BANDS.len()
                ));
            }
            if j.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
                return bad("jitter_std values must be finite and non-negative".into());
            }
        }
        Ok(())
    }

    fn jitter(&self, donor: &DonorSignature) -> Vec<f64> {
        match &self.jitter_std {
            Some(j) => j.clone(),
            None => donor.std.iter().map(|s| s * self.jitter_scale).collect(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Inpainted {
    pub stack: SceneStack,
    pub lulc: GeoGrid,
    /// Rasterized polygon.
    pub mask: PixelMask,
    /// Pixels actually rewritten: mask ∩ (built ∪ target).
    pub edited: PixelMask,
    pub donor: DonorSignature,
}

/// Land-cover inputs an intervention needs.
#[derive(Debug, Clone)]
pub struct LandcoverContext {
    pub legend: LulcLegend,
    pub built_codes: Vec<f32>,
    pub min_donor_pixels: usize,
}

/// Rewrites the reflectance bands and land cover of the masked built (and
/// already-target) pixels with the donor signature. Donors are target
/// pixels outside the mask, so repeating the edit is idempotent without
/// jitter. Thermal and air-temperature channels are untouched.
pub fn inpaint(
    stack: &SceneStack,
    lulc: &GeoGrid,
    spec: &InterventionSpec,
    ctx: &LandcoverContext,
) -> Result<Inpainted> {
    spec.validate()?;
    ensure_aligned(stack, lulc)?;
    let grid = *stack.spec();
    let mask = rasterize_polygon(&spec.polygon, &grid)?;
    let target_code = ctx.legend.require(spec.target_category)?;
    let editable =
        category_mask(lulc, &ctx.built_codes).or(&category_mask(lulc, &[target_code]))?;
    let edited = mask.and(&editable)?;
    let built_hit = mask.and(&category_mask(lulc, &ctx.built_codes))?;
    if !built_hit.any() && !edited.any() {
        return Err(Error::MaskNotBuilt);
    }
    let donor = donor_signature(
        stack,
        lulc,
        &ctx.legend,
        spec.target_category,
        spec.statistic,
        ctx.min_donor_pixels,
        Some(&mask),
    )?;
    let jitter = spec.jitter(&donor);
    let normals: Vec<Option<Normal<f64>>> = jitter
        .iter()
        .map(|&s| (s > 0.0).then(|| Normal::new(0.0, s).expect("validated std")))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let idx: Vec<usize> = (0..grid.len()).filter(|&i| edited.at(i)).collect();
    let mut new_bands: Vec<Vec<f32>> = REFLECTANCE_BANDS
        .iter()
        .map(|b| stack.channel(b).map(|g| g.values().to_vec()))
        .collect::<Result<_>>()?;
    for &i in &idx {
        for (k, band) in new_bands.iter_mut().enumerate() {
            let eps = normals[k].as_ref().map_or(0.0, |n| n.sample(&mut rng));
            band[i] = (donor.center[k] + eps).clamp(0.0, 1.0) as f32;
        }
    }
    let mut out = stack.clone();
    for (name, values) in REFLECTANCE_BANDS.iter().zip(new_bands) {
        let old = stack.channel(name)?;
        let mut g = GeoGrid::new(grid, old.nodata(), values)?.with_timestamp(old.timestamp);
        g.band = old.band.clone();
        out.replace_channel(name, g)?;
    }
    out.provenance.push(format!(
        "inpaint {} px to {}",
        idx.len(),
        spec.target_category
    ));
    let mut lulc_values = lulc.values().to_vec();
    for &i in &idx {
        lulc_values[i] = target_code;
    }
    let mut new_lulc =
        GeoGrid::new(grid, lulc.nodata(), lulc_values)?.with_timestamp(lulc.timestamp);
    new_lulc.band = lulc.band.clone();
    Ok(Inpainted {
        stack: out,
        lulc: new_lulc,
        mask,
        edited,
        donor,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransectSample {
    pub distance: f64,
    pub x: f64,
    pub y: f64,
    pub before: Option<f64>,
    pub after: Option<f64>,
    pub inside_mask: bool,
}

pub const TRANSECT_EXTENSION: f64 = 300.0;
pub const TRANSECT_STEP: f64 = 30.0;

/// Samples along the principal axis of the mask through its centroid,
/// extended beyond both ends, by nearest pixel. Samples that leave the grid
/// are dropped.
pub fn transect(
    mask: &PixelMask,
    before: &GeoGrid,
    after: &GeoGrid,
    extension: f64,
    step: f64,
) -> Result<Vec<TransectSample>> {
    ensure_aligned(mask, before)?;
    ensure_aligned(mask, after)?;
    if !(step > 0.0) || extension < 0.0 {
        return Err(Error::InvalidParameter(
            "transect step must be positive and extension non-negative".into(),
        ));
    }
    let grid = mask.spec();
    let pts: Vec<(f64, f64)> = (0..grid.height)
        .flat_map(|r| (0..grid.width).map(move |c| (c, r)))
        .filter(|&(c, r)| mask.get(c, r))
        .map(|(c, r)| grid.pixel_center(c, r))
        .collect();
    if pts.is_empty() {
        return Err(Error::DegenerateMask("transect of an empty mask".into()));
    }
    let n = pts.len() as f64;
    let (mx, my) = pts.iter().fold((0.0, 0.0), |(a, b), p| (a + p.0, b + p.1));
    let (mx, my) = (mx / n, my / n);
    let (mut cxx, mut cyy, mut cxy) = (0.0, 0.0, 0.0);
    for &(x, y) in &pts {
        cxx += (x - mx) * (x - mx);
        cyy += (y - my) * (y - my);
        cxy += (x - mx) * (y - my);
    }
    let theta = 0.5 * (2.0 * cxy).atan2(cxx - cyy);
    let (ux, uy) = (theta.cos(), theta.sin());
    let proj = pts.iter().map(|&(x, y)| (x - mx) * ux + (y - my) * uy);
    let (tmin, tmax) = proj.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), t| {
        (lo.min(t), hi.max(t))
    });
    let start = tmin - extension;
    let length = tmax + extension - start;
    let steps = (length / step + 1e-9).floor() as usize;
    let mut out = Vec::with_capacity(steps + 1);
    for k in 0..=steps {
        let s = k as f64 * step;
        let t = start + s;
        let (x, y) = (mx + t * ux, my + t * uy);
        let Some((c, r)) = grid.pixel_at(x, y) else {
            continue;
        };
        out.push(TransectSample {
            distance: s,
            x,
            y,
            before: before.get(c, r).map(f64::from),
            after: after.get(c, r).map(f64::from),
            inside_mask: mask.get(c, r),
        });
    }
    Ok(out)
}

/// Everything an evaluation needs besides the predictor and the stack.
#[derive(Debug, Clone)]
pub struct InterventionContext {
    pub landcover: LandcoverContext,
    pub green_codes: Vec<f32>,
    pub min_park_area: f64,
    pub baseline: BaselineSpec,
    pub bins: ProfileBins,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InterventionResult {
    pub spec: InterventionSpec,
    pub scene_id: String,
    pub variant: String,
    pub edited_pixels: usize,
    pub mask_pixels: usize,
    pub mean_delta_in_mask: f64,
    pub donor: DonorSignature,
    pub transect: Vec<TransectSample>,
    /// Label of the post-intervention park holding the edit, if it reaches
    /// the minimum park area.
    pub park_label: Option<u32>,
    pub internal_profile: CoolingProfile,
    pub spillover_profile: CoolingProfile,
    #[serde(skip)]
    pub before_lst: Option<GeoGrid>,
    #[serde(skip)]
    pub after_lst: Option<GeoGrid>,
    #[serde(skip)]
    pub delta: Option<GeoGrid>,
    #[serde(skip)]
    pub edited: Option<PixelMask>,
}

pub fn evaluate_intervention(
    predictor: &dyn Predictor,
    before: &SceneStack,
    lulc: &GeoGrid,
    spec: &InterventionSpec,
    ctx: &InterventionContext,
) -> Result<InterventionResult> {
    let painted = inpaint(before, lulc, spec, &ctx.landcover)?;
    let before_lst = predictor.predict(before)?;
    let after_lst = predictor.predict(&painted.stack)?;
    let delta = after_lst
        .zip_map(&before_lst, |a, b| Some(a - b))?
        .with_band("delta");
    let (sum, n) = (0..delta.spec().len())
        .filter(|&i| painted.edited.at(i))
        .filter_map(|i| delta.at(i))
        .fold((0.0f64, 0usize), |(s, n), v| (s + v as f64, n + 1));
    if n == 0 {
        return Err(Error::Predictor {
            variant: predictor.identity().into(),
            message: "no valid prediction inside the edited area".into(),
        });
    }
    let tr = transect(
        &painted.edited,
        &before_lst,
        &after_lst,
        TRANSECT_EXTENSION,
        TRANSECT_STEP,
    )?;

    let parks = ParkSet::from_mask(
        &category_mask(&painted.lulc, &ctx.green_codes),
        ctx.min_park_area,
    );
    let mut counts = std::collections::BTreeMap::<u32, usize>::new();
    for i in (0..parks.labels.len()).filter(|&i| painted.edited.at(i) && parks.labels[i] != 0) {
        *counts.entry(parks.labels[i]).or_default() += 1;
    }
    let park_label = counts
        .iter()
        .max_by_key(|(l, c)| (**c, std::cmp::Reverse(**l)))
        .map(|(l, _)| *l);
    let (internal_profile, spillover_profile) = match park_label {
        Some(label) if !parks.mask().all() => {
            let field = DistanceField::from_parks(&parks)?;
            let built = category_mask(&painted.lulc, &ctx.landcover.built_codes);
            let pc = park_cooling(&after_lst, &parks, &field, &built, &ctx.baseline, &ctx.bins)?;
            (
                pc.internal_by_park[&label].clone(),
                pc.spillover_by_park[&label].clone(),
            )
        }
        _ => (
            CoolingProfile::empty(
                ProfileSide::Internal,
                crate::cooling::bin_edges(ctx.bins.bin_width, ctx.bins.internal_max)?,
            ),
            CoolingProfile::empty(
                ProfileSide::Spillover,
                crate::cooling::bin_edges(ctx.bins.bin_width, ctx.bins.spillover_max)?,
            ),
        ),
    };

    Ok(InterventionResult {
        spec: spec.clone(),
        scene_id: before.scene_id.clone(),
        variant: predictor.identity().to_string(),
        edited_pixels: painted.edited.count(),
        mask_pixels: painted.mask.count(),
        mean_delta_in_mask: sum / n as f64,
        donor: painted.donor,
        transect: tr,
        park_label,
        internal_profile,
        spillover_profile,
        before_lst: Some(before_lst),
        after_lst: Some(after_lst),
        delta: Some(delta),
        edited: Some(painted.edited),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::predictor::LinearLstModel;
    use crate::raster::DEFAULT_NODATA;
    use crate::workspace::{AIRTEMP, SPECTRAL_BANDS};
    use chrono::{TimeZone, Utc};
    use proptest::prelude::*;
    use rand::Rng;

    fn grid() -> GridSpec {
        GridSpec::new(30, 20, 1000.0, 2000.0, 10.0, 32635).unwrap()
    }

    const TREES: f32 = 2.0;
    const BUILT: f32 = 7.0;
    const WATER: f32 = 1.0;

    fn ctx() -> LandcoverContext {
        LandcoverContext {
            legend: LulcLegend::default(),
            built_codes: vec![BUILT],
            min_donor_pixels: 100,
        }
    }

    /// Left 12 columns trees, a water strip, the rest built.
    fn lulc() -> GeoGrid {
        GeoGrid::from_fn(grid(), DEFAULT_NODATA, |c, _| {
            Some(if c < 12 {
                TREES
            } else if c < 14 {
                WATER
            } else {
                BUILT
            })
        })
        .unwrap()
    }

    fn stack(seed: u64) -> SceneStack {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let lc = lulc();
        let mut ch: Vec<(String, GeoGrid)> = SPECTRAL_BANDS
            .iter()
            .enumerate()
            .map(|(k, b)| {
                (
                    b.to_string(),
                    GeoGrid::from_fn(grid(), DEFAULT_NODATA, |c, r| {
                        let base = if lc.get(c, r) == Some(TREES) {
                            [0.03, 0.06, 0.04, 0.40, 0.18, 0.09, 25.0, 25.0][k]
                        } else {
                            [0.10, 0.11, 0.12, 0.16, 0.20, 0.18, 35.0, 35.0][k]
                        };
                        Some(base + rng.random_range(-0.01f32..0.01))
                    })
                    .unwrap(),
                )
            })
            .collect();
        ch.push((
            AIRTEMP.into(),
            GeoGrid::filled(grid(), 22.0, DEFAULT_NODATA).unwrap(),
        ));
        SceneStack::new("t", Utc.with_ymd_and_hms(2022, 7, 1, 10, 0, 0).unwrap(), ch).unwrap()
    }

    /// World rectangle covering pixel centres of columns c0..c1 and rows r0..r1 (inclusive).
    fn block(c0: usize, c1: usize, r0: usize, r1: usize) -> Polygon {
        let g = grid();
        let (x0, y0) = g.pixel_center(c0, r1);
        let (x1, y1) = g.pixel_center(c1, r0);
        Polygon::rectangle(x0, y0, x1, y1)
    }

    fn segment_distance(a: [f64; 2], b: [f64; 2], p: [f64; 2]) -> f64 {
        let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
        let t = (((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / (dx * dx + dy * dy)).clamp(0.0, 1.0);
        ((p[0] - a[0] - t * dx).powi(2) + (p[1] - a[1] - t * dy).powi(2)).sqrt()
    }

    fn boundary_distance(poly: &[[f64; 2]], p: [f64; 2]) -> f64 {
        (0..poly.len())
            .map(|i| segment_distance(poly[i], poly[(i + 1) % poly.len()], p))
            .fold(f64::INFINITY, f64::min)
    }

    fn brute_inside(poly: &[[f64; 2]], p: [f64; 2]) -> bool {
        // winding-angle oracle, with an explicit boundary check
        let n = poly.len();
        if boundary_distance(poly, p) == 0.0 {
            return true;
        }
        let mut angle = 0.0;
        for i in 0..n {
            let (a, b) = (poly[i], poly[(i + 1) % n]);
            let t1 = (a[1] - p[1]).atan2(a[0] - p[0]);
            let t2 = (b[1] - p[1]).atan2(b[0] - p[0]);
            let mut d = t2 - t1;
            while d > std::f64::consts::PI {
                d -= 2.0 * std::f64::consts::PI;
            }
            while d < -std::f64::consts::PI {
                d += 2.0 * std::f64::consts::PI;
            }
            angle += d;
        }
        angle.abs() > std::f64::consts::PI
    }

    #[test]
    fn rectangle_through_centres_gives_sixteen() {
        let m = rasterize_polygon(&block(3, 6, 2, 5), &grid()).unwrap();
        assert_eq!(m.count(), 16);
        assert!(m.get(3, 2) && m.get(6, 5) && !m.get(7, 5));
    }

    #[test]
    fn polygon_between_centres_is_empty() {
        let g = grid();
        let (x, y) = g.pixel_center(4, 4);
        let p = Polygon::rectangle(x + 1.0, y + 1.0, x + 9.0, y + 9.0);
        assert_eq!(rasterize_polygon(&p, &g).unwrap().count(), 0);
    }

    #[test]
    fn invalid_polygons() {
        assert!(Polygon::new(vec![[0.0, 0.0], [1.0, 0.0]]).is_err());
        assert!(Polygon::new(vec![[0.0, 0.0], [1.0, 1.0], [0.0, 1.0], [1.0, 0.0]]).is_err());
        assert!(Polygon::new(vec![[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]]).is_err());
        assert!(Polygon::new(vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 0.0]]).is_ok());
        assert!(Polygon::new(vec![[0.0, 0.0], [f64::NAN, 0.0], [1.0, 1.0]]).is_err());
    }

    #[test]
    fn donor_examples() {
        let s = stack(1);
        let uniform = GeoGrid::filled(grid(), 0.25, DEFAULT_NODATA).unwrap();
        let mut u = s.clone();
        for b in REFLECTANCE_BANDS {
            u.replace_channel(b, uniform.clone()).unwrap();
        }
        let d = donor_signature(
            &u,
            &lulc(),
            &LulcLegend::default(),
            LulcCategory::Trees,
            DonorStatistic::Median,
            100,
            None,
        )
        .unwrap();
        assert_eq!(d.center, vec![0.25f32 as f64; 6]);
        assert_eq!(d.std, vec![0.0; 6]);
        assert_eq!(d.pixels, 240);

        let two = GeoGrid::from_fn(grid(), DEFAULT_NODATA, |c, r| {
            Some(if (c + r) % 2 == 0 { 0.2 } else { 0.4 })
        })
        .unwrap();
        u.replace_channel("blue", two).unwrap();
        let d = donor_signature(
            &u,
            &lulc(),
            &LulcLegend::default(),
            LulcCategory::Trees,
            DonorStatistic::Median,
            100,
            None,
        )
        .unwrap();
        assert!((d.center[0] - 0.3).abs() < 1e-7);

        let err = donor_signature(
            &s,
            &lulc(),
            &LulcLegend::default(),
            LulcCategory::Trees,
            DonorStatistic::Median,
            500,
            None,
        );
        assert!(matches!(
            err,
            Err(Error::InsufficientDonors {
                found: 240,
                required: 500
            })
        ));
    }

    #[test]
    fn donor_median_matches_sort_oracle() {
        let s = stack(7);
        let d = donor_signature(
            &s,
            &lulc(),
            &LulcLegend::default(),
            LulcCategory::Trees,
            DonorStatistic::Median,
            100,
            None,
        )
        .unwrap();
        for (k, b) in REFLECTANCE_BANDS.iter().enumerate() {
            let g = s.channel(b).unwrap();
            let mut v: Vec<f64> = (0..grid().len())
                .filter(|&i| lulc().at(i) == Some(TREES))
                .map(|i| g.at(i).unwrap() as f64)
                .collect();
            v.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let expect = (v[v.len() / 2 - 1] + v[v.len() / 2]) / 2.0;
            assert_eq!(d.center[k], expect);
        }
    }

    #[test]
    fn jitter_free_inpaint_uses_median_and_is_local() {
        let s = stack(2);
        let spec = InterventionSpec::new(block(16, 22, 4, 12)).without_jitter();
        let out = inpaint(&s, &lulc(), &spec, &ctx()).unwrap();
        assert_eq!(out.edited.count(), 7 * 9);
        for (k, b) in REFLECTANCE_BANDS.iter().enumerate() {
            let (old, new) = (s.channel(b).unwrap(), out.stack.channel(b).unwrap());
            for i in 0..grid().len() {
                if out.edited.at(i) {
                    assert_eq!(new.at(i).unwrap(), out.donor.center[k] as f32);
                } else {
                    assert_eq!(new.values()[i].to_bits(), old.values()[i].to_bits());
                }
            }
        }
        for b in ["tirs1", "tirs2", AIRTEMP] {
            assert_eq!(s.channel(b).unwrap(), out.stack.channel(b).unwrap());
        }
        let (n, r) = (out.donor.center[3], out.donor.center[2]);
        let nd = (n as f32 as f64 - r as f32 as f64) / (n as f32 as f64 + r as f32 as f64);
        assert!(nd >= out.donor.ndvi_range.0 && nd <= out.donor.ndvi_range.1);
        assert!((0..grid().len()).all(|i| out.lulc.at(i)
            == if out.edited.at(i) {
                Some(TREES)
            } else {
                lulc().at(i)
            }));
    }

    #[test]
    fn inpaint_is_idempotent_without_jitter() {
        let s = stack(3);
        let spec = InterventionSpec::new(block(10, 20, 0, 19)).without_jitter();
        let once = inpaint(&s, &lulc(), &spec, &ctx()).unwrap();
        let twice = inpaint(&once.stack, &once.lulc, &spec, &ctx()).unwrap();
        for b in SPECTRAL_BANDS {
            assert_eq!(
                once.stack.channel(b).unwrap().values(),
                twice.stack.channel(b).unwrap().values()
            );
        }
        assert_eq!(once.lulc, twice.lulc);
    }

    #[test]
    fn seeded_jitter_is_deterministic_and_clamped() {
        let s = stack(4);
        let mut spec = InterventionSpec::new(block(16, 22, 4, 12));
        spec.seed = 99;
        spec.jitter_std = Some(vec![0.5; 6]);
        let a = inpaint(&s, &lulc(), &spec, &ctx()).unwrap();
        let b = inpaint(&s, &lulc(), &spec, &ctx()).unwrap();
        assert_eq!(a.stack, b.stack);
        for band in REFLECTANCE_BANDS {
            assert!(a
                .stack
                .channel(band)
                .unwrap()
                .values()
                .iter()
                .all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn water_only_mask_is_rejected() {
        let spec = InterventionSpec::new(block(12, 13, 2, 8));
        assert!(matches!(
            inpaint(&stack(5), &lulc(), &spec, &ctx()),
            Err(Error::MaskNotBuilt)
        ));
    }

    #[test]
    fn spectrally_blind_predictor_sees_no_change() {
        let s = stack(6);
        let model = LinearLstModel {
            w_airtemp: 1.0,
            ..LinearLstModel::constant(3.0)
        };
        let ictx = InterventionContext {
            landcover: ctx(),
            green_codes: vec![TREES],
            min_park_area: 0.0,
            baseline: BaselineSpec {
                ring_inner: 20.0,
                ring_outer: 60.0,
                min_pixels: 5,
                ..Default::default()
            },
            bins: ProfileBins {
                bin_width: 10.0,
                internal_max: 50.0,
                spillover_max: 50.0,
            },
        };
        let r = evaluate_intervention(
            &model,
            &s,
            &lulc(),
            &InterventionSpec::new(block(16, 22, 4, 12)),
            &ictx,
        )
        .unwrap();
        assert_eq!(r.mean_delta_in_mask, 0.0);
        assert!(r.delta.unwrap().values().iter().all(|&v| v == 0.0));
        assert!(r.transect.windows(2).all(|w| w[0].distance < w[1].distance));
        assert!(r.transect.iter().all(|t| t.before == t.after));
    }

    #[test]
    fn transect_along_wide_block_is_horizontal() {
        let g = grid();
        let mask = rasterize_polygon(&block(10, 19, 9, 10), &g).unwrap();
        let flat = GeoGrid::filled(g, 1.0, DEFAULT_NODATA).unwrap();
        let after = GeoGrid::filled(g, 0.5, DEFAULT_NODATA).unwrap();
        let t = transect(&mask, &flat, &after, 30.0, 10.0).unwrap();
        // 90 m of mask plus 30 m each side, every 10 m
        assert_eq!(t.len(), 16);
        assert!(t.iter().all(|s| (s.y - t[0].y).abs() < 1e-9));
        assert_eq!(t.iter().filter(|s| s.inside_mask).count(), 10);
        assert!(t
            .iter()
            .all(|s| s.after.unwrap() - s.before.unwrap() == -0.5));
    }

    proptest! {
        #[test]
        fn rasterization_matches_winding_oracle(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let g = grid();
            // star-shaped polygon around a random centre: always simple
            let (cx, cy) = (1000.0 + rng.random_range(50.0..250.0), 2000.0 - rng.random_range(50.0..150.0));
            let k = rng.random_range(3..9);
            let mut angles: Vec<f64> = (0..k).map(|_| rng.random_range(0.0..std::f64::consts::TAU)).collect();
            angles.sort_by(|a, b| a.partial_cmp(b).unwrap());
            angles.dedup_by(|a, b| (*a - *b).abs() < 1e-3);
            prop_assume!(angles.len() >= 3);
            let verts: Vec<[f64; 2]> = angles.iter().map(|a| {
                let r = rng.random_range(10.0..90.0);
                [cx + r * a.cos(), cy + r * a.sin()]
            }).collect();
            let poly = Polygon { vertices: verts.clone() };
            prop_assume!(poly.validate().is_ok());
            let m = rasterize_polygon(&poly, &g).unwrap();
            for r in 0..g.height {
                for c in 0..g.width {
                    let (x, y) = g.pixel_center(c, r);
                    // both sides round differently within a hair of an edge
                    if boundary_distance(&verts, [x, y]) < 1e-6 {
                        continue;
                    }
                    prop_assert_eq!(m.get(c, r), brute_inside(&verts, [x, y]), "pixel {} {}", c, r);
                }
            }
        }
    }
}
