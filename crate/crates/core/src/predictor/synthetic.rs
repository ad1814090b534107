//! A synthetic city with planted cooling physics, used as ground truth for
//! end-to-end checks.
//!
//! Truth LST at a pixel:
//!
//! ```text
//! t_base + air_coupling·(air − air_ref) + α·bf
//!        − β·min(d_in/L_i, 1)         park pixels
//!        − γ·exp(−d_out/L_s)          all other pixels
//!        + noise
//! ```
//!
//! `bf` is the planted urban-form field: an 11×11 box mean of the city
//! footprint with parks counted as city.

use std::f64::consts::PI;
use std::path::Path;

use chrono::{DateTime, TimeZone, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::cooling::built_fraction;
use crate::error::{Error, Result};
use crate::landcover::{DistanceField, LulcCategory, LulcLegend, ParkSet};
use crate::raster::{write_grid, GeoGrid, GridSpec, PixelMask, DEFAULT_NODATA};
use crate::workspace::{
    write_json, write_scene, SceneMeta, SceneStack, Workspace, WorkspaceConfig, AIRTEMP,
    REFLECTANCE_BANDS, WORKSPACE_FILE,
};

pub const WORLD_SPEC_PATH: &str = "synthetic/world.json";
pub const URBAN_FORM_PATH: &str = "synthetic/urban_form.grid";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticWorldSpec {
    pub city_id: String,
    pub size: usize,
    pub pixel_size: f64,
    pub origin_x: f64,
    pub origin_y: f64,
    pub epsg: u32,
    pub seed: u64,
    pub t_base: f64,
    pub air_ref: f64,
    pub air_coupling: f64,
    /// α
    pub uhi_amplitude: f64,
    /// β
    pub internal_depth: f64,
    /// L_i, metres
    pub internal_saturation: f64,
    /// γ
    pub spillover_amplitude: f64,
    /// L_s, metres
    pub spillover_decay: f64,
    pub noise_std: f64,
    /// City disk radius as a fraction of the grid side.
    pub city_radius_frac: f64,
    /// Parks stay outside this fraction of the city radius.
    pub core_free_frac: f64,
    /// Park centres lie within this fraction of the city radius.
    pub park_zone_frac: f64,
    pub park_count: usize,
    pub park_side_min: usize,
    pub park_side_max: usize,
    /// Minimum pixel gap between parks.
    pub park_gap: usize,
    pub lake_radius: usize,
    pub reflectance_noise: f64,
    pub built_fraction_window: usize,
    pub scene_count: usize,
    pub air_mean: f64,
    pub air_std: f64,
    pub cloud_max: f64,
    pub utc_offset_hours: f64,
}

impl Default for SyntheticWorldSpec {
    fn default() -> Self {
        SyntheticWorldSpec {
            city_id: "synthetic-city".into(),
            size: 512,
            pixel_size: 30.0,
            origin_x: 500_000.0,
            origin_y: 5_000_000.0,
            epsg: 32635,
            seed: 42,
            t_base: 30.0,
            air_ref: 24.0,
            air_coupling: 1.0,
            uhi_amplitude: 3.3,
            internal_depth: 2.6,
            internal_saturation: 200.0,
            spillover_amplitude: 3.5,
            spillover_decay: 150.0 / 3.5f64.ln(),
            noise_std: 0.0,
            city_radius_frac: 0.4,
            core_free_frac: 0.2,
            park_zone_frac: 0.55,
            park_count: 8,
            park_side_min: 24,
            park_side_max: 36,
            park_gap: 20,
            lake_radius: 20,
            reflectance_noise: 0.005,
            built_fraction_window: 11,
            scene_count: 20,
            air_mean: 24.0,
            air_std: 3.0,
            cloud_max: 0.25,
            utc_offset_hours: 2.0,
        }
    }
}

/// Planted park footprint in pixel coordinates, `[col0, col0+width) × [row0, row0+height)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParkRect {
    pub col0: usize,
    pub row0: usize,
    pub width: usize,
    pub height: usize,
}

impl ParkRect {
    fn contains(&self, c: usize, r: usize) -> bool {
        c >= self.col0
            && c < self.col0 + self.width
            && r >= self.row0
            && r < self.row0 + self.height
    }

    fn separated(&self, o: &ParkRect, gap: usize) -> bool {
        self.col0 >= o.col0 + o.width + gap
            || o.col0 >= self.col0 + self.width + gap
            || self.row0 >= o.row0 + o.height + gap
            || o.row0 >= self.row0 + self.height + gap
    }
}

const REFLECTANCE: [(LulcCategory, [f64; 6]); 4] = [
    (LulcCategory::Water, [0.06, 0.05, 0.03, 0.02, 0.01, 0.01]),
    (LulcCategory::Trees, [0.03, 0.06, 0.04, 0.40, 0.18, 0.09]),
    (LulcCategory::Crops, [0.06, 0.10, 0.10, 0.28, 0.24, 0.16]),
    (LulcCategory::Built, [0.10, 0.11, 0.12, 0.16, 0.20, 0.18]),
];

/// Mean surface reflectance of a synthetic land-cover class in
/// `REFLECTANCE_BANDS` order.
pub fn class_reflectance(category: LulcCategory) -> Option<[f64; 6]> {
    REFLECTANCE
        .iter()
        .find(|(c, _)| *c == category)
        .map(|(_, r)| *r)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSceneInfo {
    pub scene_id: String,
    pub meta: SceneMeta,
}

#[derive(Debug, Clone)]
pub struct SyntheticScene {
    pub scene_id: String,
    pub meta: SceneMeta,
    pub stack: SceneStack,
    pub truth: GeoGrid,
}

#[derive(Debug, Clone)]
pub struct SyntheticWorld {
    pub spec: SyntheticWorldSpec,
    pub grid: GridSpec,
    pub legend: LulcLegend,
    pub lulc: GeoGrid,
    pub urban_form: GeoGrid,
    pub parks: Vec<ParkRect>,
    pub park_mask: PixelMask,
    pub field: DistanceField,
    reflectance: Vec<GeoGrid>,
    pub scenes: Vec<SyntheticSceneInfo>,
}

impl SyntheticWorldSpec {
    pub fn grid(&self) -> Result<GridSpec> {
        GridSpec::new(
            self.size,
            self.size,
            self.origin_x,
            self.origin_y,
            self.pixel_size,
            self.epsg,
        )
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Synthetic(m.into()));
        if self.size < 64 {
            return bad("grid side must be at least 64");
        }
        if !(self.internal_saturation > 0.0 && self.spillover_decay > 0.0) {
            return bad("length scales must be positive");
        }
        if self.park_side_min == 0 || self.park_side_min > self.park_side_max {
            return bad("park side range is empty");
        }
        if !(0.0 < self.core_free_frac
            && self.core_free_frac < self.park_zone_frac
            && self.park_zone_frac < 1.0)
        {
            return bad("need 0 < core_free_frac < park_zone_frac < 1");
        }
        if self.noise_std < 0.0 || self.reflectance_noise < 0.0 || self.air_std < 0.0 {
            return bad("noise levels must be non-negative");
        }
        if self.built_fraction_window.is_multiple_of(2) {
            return bad("built fraction window must be odd");
        }
        Ok(())
    }

    /// Noise-free planted LST. `inside` is set for park pixels, `outside`
    /// for all others.
    pub fn planted_lst(&self, air: f64, bf: f64, inside: Option<f64>, outside: Option<f64>) -> f64 {
        let mut t =
            self.t_base + self.air_coupling * (air - self.air_ref) + self.uhi_amplitude * bf;
        if let Some(d) = inside {
            t -= self.internal_depth * (d / self.internal_saturation).min(1.0);
        } else if let Some(d) = outside {
            t -= self.spillover_amplitude * (-d / self.spillover_decay).exp();
        }
        t
    }

    /// Planted internal cooling curve (negative ΔT) at inside distance `d`.
    pub fn internal_curve(&self, d: f64) -> f64 {
        -self.internal_depth * (d / self.internal_saturation).min(1.0)
    }

    /// Planted spillover curve (negative ΔT) at outside distance `d`.
    pub fn spillover_curve(&self, d: f64) -> f64 {
        -self.spillover_amplitude * (-d / self.spillover_decay).exp()
    }

    fn city_radius(&self) -> f64 {
        self.city_radius_frac * self.size as f64
    }

    fn center(&self) -> f64 {
        self.size as f64 / 2.0
    }
}

fn place_parks(spec: &SyntheticWorldSpec, rng: &mut ChaCha8Rng) -> Result<Vec<ParkRect>> {
    let radius = spec.city_radius();
    let (cx, cy) = (spec.center(), spec.center());
    let core = spec.core_free_frac * radius;
    let zone = spec.park_zone_frac * radius;
    // leave room for the baseline ring inside the city
    let margin = (0.2 * radius).min(40.0);
    let mut parks: Vec<ParkRect> = Vec::new();
    for _ in 0..200_000 {
        if parks.len() == spec.park_count {
            break;
        }
        let w = rng.random_range(spec.park_side_min..=spec.park_side_max);
        let h = rng.random_range(spec.park_side_min..=spec.park_side_max);
        let theta = rng.random_range(0.0..2.0 * PI);
        let rho = zone * rng.random::<f64>().sqrt();
        let (px, py) = (cx + rho * theta.cos(), cy + rho * theta.sin());
        let col0 = px - w as f64 / 2.0;
        let row0 = py - h as f64 / 2.0;
        if col0 < 0.0 || row0 < 0.0 {
            continue;
        }
        let rect = ParkRect {
            col0: col0.round() as usize,
            row0: row0.round() as usize,
            width: w,
            height: h,
        };
        let corners = [
            (rect.col0, rect.row0),
            (rect.col0 + w, rect.row0),
            (rect.col0, rect.row0 + h),
            (rect.col0 + w, rect.row0 + h),
        ];
        // the nearest point of the rectangle to the centre must clear the core
        let nx = cx.clamp(rect.col0 as f64, (rect.col0 + w) as f64);
        let ny = cy.clamp(rect.row0 as f64, (rect.row0 + h) as f64);
        if ((nx - cx).powi(2) + (ny - cy).powi(2)).sqrt() < core {
            continue;
        }
        if corners.iter().any(|&(c, r)| {
            ((c as f64 - cx).powi(2) + (r as f64 - cy).powi(2)).sqrt() > radius - margin
        }) {
            continue;
        }
        if parks.iter().all(|p| p.separated(&rect, spec.park_gap)) {
            parks.push(rect);
        }
    }
    if parks.len() < spec.park_count {
        return Err(Error::Synthetic(format!(
            "placed {} of {} parks; the annulus is too crowded",
            parks.len(),
            spec.park_count
        )));
    }
    parks.sort_by_key(|p| (p.row0, p.col0));
    Ok(parks)
}

fn scene_timestamp(k: usize) -> DateTime<Utc> {
    let year = 2017 + (k / 3) as i32;
    let month = 6 + (k % 3) as u32;
    let day = 5 + ((k * 11) % 20) as u32;
    Utc.with_ymd_and_hms(year, month, day, 10, 30, 0)
        .single()
        .expect("valid date")
}

/// Builds the static surface of the world and the scene schedule.
pub fn generate_synthetic_city(spec: &SyntheticWorldSpec) -> Result<SyntheticWorld> {
    spec.validate()?;
    let grid = spec.grid()?;
    let legend = LulcLegend::default();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let parks = place_parks(spec, &mut rng)?;

    let (cx, cy, radius) = (spec.center(), spec.center(), spec.city_radius());
    let in_city = |c: usize, r: usize| {
        ((c as f64 + 0.5 - cx).powi(2) + (r as f64 + 0.5 - cy).powi(2)).sqrt() <= radius
    };
    let lake_d = radius + spec.lake_radius as f64 + 30.0;
    let (lx, ly) = (
        cx + lake_d * (PI / 4.0).cos(),
        cy + lake_d * (PI / 4.0).sin(),
    );
    let in_lake = |c: usize, r: usize| {
        ((c as f64 + 0.5 - lx).powi(2) + (r as f64 + 0.5 - ly).powi(2)).sqrt()
            <= spec.lake_radius as f64
    };

    let footprint = PixelMask::from_fn(grid, in_city);
    let park_mask = PixelMask::from_fn(grid, |c, r| parks.iter().any(|p| p.contains(c, r)));
    let category = |c: usize, r: usize| {
        if park_mask.get(c, r) {
            LulcCategory::Trees
        } else if footprint.get(c, r) {
            LulcCategory::Built
        } else if in_lake(c, r) {
            LulcCategory::Water
        } else {
            LulcCategory::Crops
        }
    };
    let lulc = GeoGrid::from_fn(grid, DEFAULT_NODATA, |c, r| {
        legend.code(category(c, r)).map(|v| v as f32)
    })?
    .with_band("lulc");
    let urban_form =
        built_fraction(&footprint, spec.built_fraction_window)?.with_band("urban_form");

    let noise = Normal::new(0.0, spec.reflectance_noise.max(f64::MIN_POSITIVE))
        .map_err(|e| Error::Synthetic(e.to_string()))?;
    let mut surface_rng = ChaCha8Rng::seed_from_u64(spec.seed);
    surface_rng.set_stream(1);
    let mut bands: Vec<Vec<f32>> = vec![Vec::with_capacity(grid.len()); REFLECTANCE_BANDS.len()];
    for r in 0..grid.height {
        for c in 0..grid.width {
            let base =
                class_reflectance(category(c, r)).expect("every planted class has reflectance");
            for (k, band) in bands.iter_mut().enumerate() {
                let eps = if spec.reflectance_noise > 0.0 {
                    noise.sample(&mut surface_rng)
                } else {
                    0.0
                };
                band.push((base[k] + eps).clamp(0.0, 1.0) as f32);
            }
        }
    }
    let reflectance = bands
        .into_iter()
        .zip(REFLECTANCE_BANDS)
        .map(|(v, name)| GeoGrid::new(grid, DEFAULT_NODATA, v).map(|g| g.with_band(name)))
        .collect::<Result<Vec<_>>>()?;

    let park_set = ParkSet::from_mask(&park_mask, 0.0);
    let field = DistanceField::from_parks(&park_set)?;

    let air_noise = Normal::new(0.0, spec.air_std.max(f64::MIN_POSITIVE))
        .map_err(|e| Error::Synthetic(e.to_string()))?;
    let mut sched = ChaCha8Rng::seed_from_u64(spec.seed);
    sched.set_stream(2);
    let scenes = (0..spec.scene_count)
        .map(|k| {
            let ts = scene_timestamp(k);
            let a = spec.air_mean
                + if spec.air_std > 0.0 {
                    air_noise.sample(&mut sched)
                } else {
                    0.0
                };
            // a 1/16 °C lattice keeps air-temperature arithmetic exact in f32
            let air = (a * 16.0).round() / 16.0;
            let cloud = sched.random_range(0.0..=spec.cloud_max);
            SyntheticSceneInfo {
                scene_id: ts.format("S%Y%m%dT%H%M").to_string(),
                meta: SceneMeta {
                    timestamp: ts,
                    cloud_fraction: (cloud * 1000.0).round() / 1000.0,
                    air_temp_c: Some(air),
                },
            }
        })
        .collect();

    Ok(SyntheticWorld {
        spec: spec.clone(),
        grid,
        legend,
        lulc,
        urban_form,
        parks,
        park_mask,
        field,
        reflectance,
        scenes,
    })
}

impl SyntheticWorld {
    pub fn scene_count(&self) -> usize {
        self.scenes.len()
    }

    pub fn reflectance(&self, band: &str) -> Option<&GeoGrid> {
        REFLECTANCE_BANDS
            .iter()
            .position(|b| *b == band)
            .map(|i| &self.reflectance[i])
    }

    /// Noise-free planted LST for a given air temperature.
    pub fn planted_field(&self, air: f64) -> Result<GeoGrid> {
        let s = &self.spec;
        let values: Vec<Option<f32>> = (0..self.grid.len())
            .map(|i| {
                let bf = self.urban_form.at(i)? as f64;
                let inside = self
                    .park_mask
                    .at(i)
                    .then(|| self.field.inside.at(i).map(f64::from))
                    .flatten();
                let outside = self.field.outside.at(i).map(f64::from);
                Some(s.planted_lst(air, bf, inside, outside) as f32)
            })
            .collect();
        GeoGrid::from_options(self.grid, DEFAULT_NODATA, &values)
    }

    /// Materialises scene `k`: the stack (thermal channels carry the truth
    /// in both brightness bands) and the truth itself.
    pub fn scene(&self, k: usize) -> Result<SyntheticScene> {
        let info = self
            .scenes
            .get(k)
            .ok_or_else(|| Error::Synthetic(format!("scene index {k} out of range")))?;
        let air = info
            .meta
            .air_temp_c
            .expect("synthetic scenes carry air temperature");
        let mut truth = self.planted_field(air)?;
        if self.spec.noise_std > 0.0 {
            let normal = Normal::new(0.0, self.spec.noise_std)
                .map_err(|e| Error::Synthetic(e.to_string()))?;
            let mut rng = ChaCha8Rng::seed_from_u64(self.spec.seed);
            rng.set_stream(1000 + k as u64);
            truth = truth.map(|v| Some((v as f64 + normal.sample(&mut rng)) as f32))?;
        }
        let ts = Some(info.meta.timestamp);
        let truth = truth.with_band("lst").with_timestamp(ts);
        let mut channels: Vec<(String, GeoGrid)> = REFLECTANCE_BANDS
            .iter()
            .zip(&self.reflectance)
            .map(|(n, g)| (n.to_string(), g.clone().with_timestamp(ts)))
            .collect();
        channels.push(("tirs1".into(), truth.clone().with_band("tirs1")));
        channels.push(("tirs2".into(), truth.clone().with_band("tirs2")));
        channels.push((
            AIRTEMP.into(),
            GeoGrid::filled(self.grid, air as f32, DEFAULT_NODATA)?.with_band(AIRTEMP),
        ));
        let stack = SceneStack::new(info.scene_id.clone(), info.meta.timestamp, channels)?;
        Ok(SyntheticScene {
            scene_id: info.scene_id.clone(),
            meta: info.meta.clone(),
            stack,
            truth,
        })
    }
}

/// Writes the world as a workspace (plus its hidden parameters under
/// `synthetic/`) and opens it.
pub fn write_synthetic_workspace(root: &Path, world: &SyntheticWorld) -> Result<Workspace> {
    let mut config = WorkspaceConfig::new(world.spec.city_id.clone(), world.grid);
    config.utc_offset_hours = world.spec.utc_offset_hours;
    config.lulc_legend = world.legend.clone();
    config.analysis.seed = world.spec.seed;
    config.analysis.built_fraction_window = world.spec.built_fraction_window;
    write_json(&root.join(WORKSPACE_FILE), &config)?;
    write_grid(root.join(&config.lulc_path), &world.lulc)?;
    write_json(&root.join(WORLD_SPEC_PATH), &world.spec)?;
    write_grid(root.join(URBAN_FORM_PATH), &world.urban_form)?;
    crate::climate::ScenarioTable::illustrative()
        .write(&root.join(&config.analysis.scenarios_path))?;
    for k in 0..world.scene_count() {
        let s = world.scene(k)?;
        write_scene(root, &s.scene_id, &s.meta, &s.stack, false)?;
    }
    Workspace::open(root)
}
