//! Workspace layout, scene catalog, scene selection and band stacking.
//!
//! ```text
//! <root>/workspace.json
//! <root>/lulc/lulc.grid(.json)
//! <root>/scenes/<scene_id>/scene.json
//! <root>/scenes/<scene_id>/<band>.grid(.json)     blue green red nir swir1 swir2 tirs1 tirs2
//! <root>/scenes/<scene_id>/airtemp.grid(.json)    optional when scene.json has air_temp_c
//! <root>/predictions/<variant>/<scene_id>.grid    externally produced LST
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Datelike, Duration, Timelike, Utc};
use serde::{Deserialize, Serialize};

use crate::config::{AnalysisConfig, SceneFilter};
use crate::error::{Error, Result, SceneIssue};
use crate::landcover::{LulcCategory, LulcLegend};
use crate::raster::{
    ensure_aligned, read_grid, read_grid_header, resample_majority, sidecar_path, write_grid,
    GeoGrid, GridSpec, HasGeometry,
};
use crate::spectral::{emissivity_pair, ndvi, split_window_lst};

/// Spectral bands in stack order.
pub const SPECTRAL_BANDS: [&str; 8] = [
    "blue", "green", "red", "nir", "swir1", "swir2", "tirs1", "tirs2",
];
/// Reflectance bands (the first six spectral bands).
pub const REFLECTANCE_BANDS: [&str; 6] = ["blue", "green", "red", "nir", "swir1", "swir2"];
pub const AIRTEMP: &str = "airtemp";

pub const WORKSPACE_FILE: &str = "workspace.json";
pub const SCENE_FILE: &str = "scene.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkspaceConfig {
    pub city_id: String,
    pub grid: GridSpec,
    #[serde(default)]
    pub utc_offset_hours: f64,
    /// Band name to dataset band code, for provenance only.
    #[serde(default)]
    pub band_mapping: BTreeMap<String, String>,
    #[serde(default = "default_lulc_path")]
    pub lulc_path: String,
    #[serde(default)]
    pub lulc_legend: LulcLegend,
    #[serde(default)]
    pub analysis: AnalysisConfig,
}

fn default_lulc_path() -> String {
    "lulc/lulc.grid".into()
}

impl WorkspaceConfig {
    pub fn new(city_id: impl Into<String>, grid: GridSpec) -> Self {
        WorkspaceConfig {
            city_id: city_id.into(),
            grid,
            utc_offset_hours: 0.0,
            band_mapping: BTreeMap::new(),
            lulc_path: default_lulc_path(),
            lulc_legend: LulcLegend::default(),
            analysis: AnalysisConfig::default(),
        }
    }

    pub fn codes(&self, categories: &[LulcCategory]) -> Vec<f32> {
        self.lulc_legend.codes_for(categories)
    }
}

/// `scene.json` contents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneMeta {
    pub timestamp: DateTime<Utc>,
    pub cloud_fraction: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub air_temp_c: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AirTemperature {
    Scalar(f64),
    Grid(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneRecord {
    pub scene_id: String,
    pub timestamp: DateTime<Utc>,
    pub band_paths: BTreeMap<String, PathBuf>,
    pub air_temp: AirTemperature,
    pub cloud_fraction: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Workspace {
    pub root: PathBuf,
    pub config: WorkspaceConfig,
    pub scenes: Vec<SceneRecord>,
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Sidecar {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let text = serde_json::to_string_pretty(value)? + "\n";
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn check_grid(path: &Path, spec: &GridSpec) -> std::result::Result<(), String> {
    if !path.exists() {
        return Err(format!(
            "missing {}",
            path.file_name().unwrap().to_string_lossy()
        ));
    }
    if !sidecar_path(path).exists() {
        return Err(format!(
            "missing sidecar for {}",
            path.file_name().unwrap().to_string_lossy()
        ));
    }
    let header = read_grid_header(path).map_err(|e| e.to_string())?;
    if header.spec() != *spec {
        return Err(format!(
            "{} geometry differs from the workspace grid",
            path.file_name().unwrap().to_string_lossy()
        ));
    }
    Ok(())
}

fn catalog_one(
    dir: &Path,
    scene_id: &str,
    spec: &GridSpec,
) -> std::result::Result<SceneRecord, Vec<String>> {
    let mut problems = Vec::new();
    let meta: Option<SceneMeta> = match read_json(&dir.join(SCENE_FILE)) {
        Ok(m) => Some(m),
        Err(e) => {
            problems.push(format!("scene.json: {e}"));
            None
        }
    };
    let mut band_paths = BTreeMap::new();
    let mut missing = Vec::new();
    for band in SPECTRAL_BANDS {
        let path = dir.join(format!("{band}.grid"));
        match check_grid(&path, spec) {
            Ok(()) => {
                band_paths.insert(band.to_string(), path);
            }
            Err(p) if !path.exists() => {
                let _ = p;
                missing.push(band);
            }
            Err(p) => problems.push(p),
        }
    }
    if !missing.is_empty() {
        problems.push(format!("missing band(s): {}", missing.join(", ")));
    }
    let air_path = dir.join(format!("{AIRTEMP}.grid"));
    let air = if air_path.exists() {
        match check_grid(&air_path, spec) {
            Ok(()) => Some(AirTemperature::Grid(air_path)),
            Err(p) => {
                problems.push(p);
                None
            }
        }
    } else {
        match meta.as_ref().and_then(|m| m.air_temp_c) {
            Some(t) if t.is_finite() => Some(AirTemperature::Scalar(t)),
            _ => {
                if meta.is_some() {
                    problems.push("no airtemp.grid and no air_temp_c".into());
                }
                None
            }
        }
    };
    if let Some(m) = &meta {
        if !(0.0..=1.0).contains(&m.cloud_fraction) {
            problems.push(format!(
                "cloud_fraction {} outside [0, 1]",
                m.cloud_fraction
            ));
        }
    }
    match (meta, air, problems.is_empty()) {
        (Some(meta), Some(air_temp), true) => Ok(SceneRecord {
            scene_id: scene_id.to_string(),
            timestamp: meta.timestamp,
            band_paths,
            air_temp,
            cloud_fraction: meta.cloud_fraction,
        }),
        _ => Err(problems),
    }
}

/// Indexes every scene under `<root>/scenes`. All malformed scenes are
/// reported together; none is dropped silently.
pub fn catalog_scenes(root: impl AsRef<Path>) -> Result<Workspace> {
    let root = root.as_ref().to_path_buf();
    let config: WorkspaceConfig = read_json(&root.join(WORKSPACE_FILE))
        .map_err(|e| Error::Workspace(format!("{}: {e}", root.display())))?;
    config
        .grid
        .validate()
        .map_err(|e| Error::Workspace(format!("workspace grid: {e}")))?;
    config.analysis.validate()?;
    let scenes_dir = root.join("scenes");
    let mut ids: Vec<String> = Vec::new();
    if scenes_dir.is_dir() {
        for entry in fs::read_dir(&scenes_dir).map_err(|e| Error::io(&scenes_dir, e))? {
            let entry = entry.map_err(|e| Error::io(&scenes_dir, e))?;
            if entry.path().is_dir() {
                ids.push(entry.file_name().to_string_lossy().into_owned());
            }
        }
    }
    ids.sort();
    let mut scenes = Vec::new();
    let mut issues = Vec::new();
    for id in ids {
        match catalog_one(&scenes_dir.join(&id), &id, &config.grid) {
            Ok(rec) => scenes.push(rec),
            Err(problems) => issues.extend(problems.into_iter().map(|problem| SceneIssue {
                scene_id: id.clone(),
                problem,
            })),
        }
    }
    if !issues.is_empty() {
        return Err(Error::InvalidScenes(issues));
    }
    Ok(Workspace {
        root,
        config,
        scenes,
    })
}

/// Fractional local hour of a UTC instant under a fixed offset.
pub fn local_time(ts: DateTime<Utc>, utc_offset_hours: f64) -> DateTime<Utc> {
    ts + Duration::seconds((utc_offset_hours * 3600.0).round() as i64)
}

impl SceneFilter {
    pub fn accepts(&self, scene: &SceneRecord, utc_offset_hours: f64) -> bool {
        let local = local_time(scene.timestamp, utc_offset_hours);
        let hour =
            local.hour() as f64 + local.minute() as f64 / 60.0 + local.second() as f64 / 3600.0;
        self.months.contains(&local.month())
            && hour >= self.hour_start
            && hour < self.hour_end
            && scene.cloud_fraction <= self.max_cloud
    }
}

/// Scenes passing `filter`, in catalog order.
pub fn filter_scenes(
    scenes: &[SceneRecord],
    filter: &SceneFilter,
    utc_offset_hours: f64,
) -> Vec<SceneRecord> {
    scenes
        .iter()
        .filter(|s| filter.accepts(s, utc_offset_hours))
        .cloned()
        .collect()
}

/// A timestamped multiband stack on one grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneStack {
    pub scene_id: String,
    pub timestamp: DateTime<Utc>,
    spec: GridSpec,
    names: Vec<String>,
    channels: Vec<GeoGrid>,
    /// Modifications applied since the stack was read from disk.
    pub provenance: Vec<String>,
}

impl HasGeometry for SceneStack {
    fn geometry(&self) -> &GridSpec {
        &self.spec
    }
}

impl SceneStack {
    pub fn new(
        scene_id: impl Into<String>,
        timestamp: DateTime<Utc>,
        channels: Vec<(String, GeoGrid)>,
    ) -> Result<Self> {
        let first = channels
            .first()
            .ok_or_else(|| Error::InvalidParameter("a stack needs at least one channel".into()))?;
        let spec = *first.1.spec();
        let mut names = Vec::with_capacity(channels.len());
        let mut grids = Vec::with_capacity(channels.len());
        for (name, grid) in channels {
            ensure_aligned(&spec, &grid)?;
            if names.contains(&name) {
                return Err(Error::InvalidParameter(format!(
                    "duplicate channel `{name}`"
                )));
            }
            names.push(name);
            grids.push(grid);
        }
        Ok(SceneStack {
            scene_id: scene_id.into(),
            timestamp,
            spec,
            names,
            channels: grids,
            provenance: Vec::new(),
        })
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn channels(&self) -> impl Iterator<Item = (&str, &GeoGrid)> {
        self.names.iter().map(String::as_str).zip(&self.channels)
    }

    pub fn channel(&self, name: &str) -> Result<&GeoGrid> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| &self.channels[i])
            .ok_or_else(|| Error::MissingChannel(name.to_string()))
    }

    /// Replaces an existing channel with an aligned grid.
    pub fn replace_channel(&mut self, name: &str, grid: GeoGrid) -> Result<()> {
        ensure_aligned(&self.spec, &grid)?;
        let i = self
            .names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::MissingChannel(name.to_string()))?;
        self.channels[i] = grid;
        Ok(())
    }

    /// Month of the acquisition (UTC).
    pub fn month(&self) -> u32 {
        self.timestamp.month()
    }
}

impl Workspace {
    pub fn open(root: impl AsRef<Path>) -> Result<Self> {
        catalog_scenes(root)
    }

    pub fn city_id(&self) -> &str {
        &self.config.city_id
    }

    pub fn grid(&self) -> &GridSpec {
        &self.config.grid
    }

    pub fn analysis(&self) -> &AnalysisConfig {
        &self.config.analysis
    }

    pub fn scene(&self, id: &str) -> Result<&SceneRecord> {
        self.scenes
            .iter()
            .find(|s| s.scene_id == id)
            .ok_or_else(|| Error::SceneNotFound(id.to_string()))
    }

    pub fn filtered_scenes(&self) -> Vec<SceneRecord> {
        filter_scenes(
            &self.scenes,
            &self.config.analysis.scene_filter,
            self.config.utc_offset_hours,
        )
    }

    /// Land cover on the analysis grid. A finer grid is majority-resampled.
    pub fn load_lulc(&self) -> Result<GeoGrid> {
        let path = self.root.join(&self.config.lulc_path);
        let lulc = read_grid(&path)?;
        let grid = self.grid();
        if lulc.spec() == grid {
            return Ok(lulc);
        }
        if lulc.spec().pixel_size < grid.pixel_size {
            return resample_majority(&lulc, grid);
        }
        Err(Error::Misaligned(format!(
            "{}: land cover is neither on nor finer than the workspace grid",
            path.display()
        )))
    }

    pub fn build_stack(&self, scene: &SceneRecord) -> Result<SceneStack> {
        build_stack(scene, self.grid())
    }

    pub fn stack(&self, scene_id: &str) -> Result<SceneStack> {
        self.build_stack(self.scene(scene_id)?)
    }

    /// Split-window LST from the thermal bands; cloud pixels become nodata.
    pub fn truth_lst(&self, stack: &SceneStack, lulc: &GeoGrid) -> Result<GeoGrid> {
        let a = self.analysis();
        let v = ndvi(stack.channel("nir")?, stack.channel("red")?)?;
        let (eps_mean, eps_diff) = emissivity_pair(&v, &a.emissivity_i, &a.emissivity_j)?;
        let lst = split_window_lst(
            stack.channel("tirs1")?,
            stack.channel("tirs2")?,
            &eps_mean,
            &eps_diff,
            &a.split_window,
        )?;
        ensure_aligned(&lst, lulc)?;
        let clouds = self
            .config
            .lulc_legend
            .code(LulcCategory::Clouds)
            .map(|c| c as f32);
        let values: Vec<Option<f32>> = lst
            .iter()
            .zip(lulc.iter())
            .map(|(t, c)| if c.is_some() && c == clouds { None } else { t })
            .collect();
        Ok(GeoGrid::from_options(*lst.spec(), lst.nodata(), &values)?
            .with_band("lst")
            .with_timestamp(Some(stack.timestamp)))
    }

    pub fn predictions_dir(&self, variant: &str) -> PathBuf {
        self.root.join("predictions").join(variant)
    }
}

/// Reads a scene's bands in stack order and appends the air-temperature channel.
pub fn build_stack(scene: &SceneRecord, grid: &GridSpec) -> Result<SceneStack> {
    let mut channels = Vec::with_capacity(SPECTRAL_BANDS.len() + 1);
    for band in SPECTRAL_BANDS {
        let path = scene
            .band_paths
            .get(band)
            .ok_or_else(|| Error::MissingChannel(band.to_string()))?;
        let g = read_grid(path)?;
        ensure_aligned(grid, &g)?;
        channels.push((band.to_string(), g));
    }
    let air = match &scene.air_temp {
        AirTemperature::Grid(path) => {
            let g = read_grid(path)?;
            ensure_aligned(grid, &g)?;
            g
        }
        AirTemperature::Scalar(t) => {
            let nodata = channels[0].1.nodata();
            GeoGrid::filled(*grid, *t as f32, nodata)?
        }
    };
    channels.push((AIRTEMP.to_string(), air));
    SceneStack::new(scene.scene_id.clone(), scene.timestamp, channels)
}

/// Writes one scene directory in workspace layout.
pub fn write_scene(
    root: &Path,
    scene_id: &str,
    meta: &SceneMeta,
    stack: &SceneStack,
    gridded_air: bool,
) -> Result<()> {
    let dir = root.join("scenes").join(scene_id);
    write_json(&dir.join(SCENE_FILE), meta)?;
    for (name, grid) in stack.channels() {
        if name == AIRTEMP && !gridded_air {
            continue;
        }
        let g = grid
            .clone()
            .with_band(name)
            .with_timestamp(Some(stack.timestamp));
        write_grid(dir.join(format!("{name}.grid")), &g)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::DEFAULT_NODATA;
    use chrono::TimeZone;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grid() -> GridSpec {
        GridSpec::new(4, 3, 500_000.0, 5_000_000.0, 30.0, 32635).unwrap()
    }

    fn stack(ts: DateTime<Utc>) -> SceneStack {
        let mut ch: Vec<(String, GeoGrid)> = SPECTRAL_BANDS
            .iter()
            .enumerate()
            .map(|(k, b)| {
                (
                    b.to_string(),
                    GeoGrid::from_fn(grid(), DEFAULT_NODATA, |c, r| {
                        Some((k * 100 + r * 4 + c) as f32 / 1000.0)
                    })
                    .unwrap(),
                )
            })
            .collect();
        ch.push((
            AIRTEMP.into(),
            GeoGrid::filled(grid(), 21.5, DEFAULT_NODATA).unwrap(),
        ));
        SceneStack::new("s", ts, ch).unwrap()
    }

    fn init(root: &Path) {
        write_json(
            &root.join(WORKSPACE_FILE),
            &WorkspaceConfig::new("testville", grid()),
        )
        .unwrap();
    }

    fn summer() -> DateTime<Utc> {
        Utc.with_ymd_and_hms(2021, 7, 3, 10, 30, 0).unwrap()
    }

    #[test]
    fn empty_scene_directory() {
        let dir = tempfile::tempdir().unwrap();
        init(dir.path());
        fs::create_dir_all(dir.path().join("scenes")).unwrap();
        let ws = catalog_scenes(dir.path()).unwrap();
        assert!(ws.scenes.is_empty());
        assert_eq!(ws.city_id(), "testville");
    }

    #[test]
    fn complete_scene_is_indexed_and_stacked() {
        let dir = tempfile::tempdir().unwrap();
        init(dir.path());
        let meta = SceneMeta {
            timestamp: summer(),
            cloud_fraction: 0.1,
            air_temp_c: Some(21.5),
        };
        let s = stack(summer());
        write_scene(dir.path(), "a", &meta, &s, false).unwrap();
        let ws = catalog_scenes(dir.path()).unwrap();
        assert_eq!(ws.scenes.len(), 1);
        assert_eq!(ws.scenes[0].band_paths.len(), 8);
        assert_eq!(ws.scenes[0].air_temp, AirTemperature::Scalar(21.5));
        let back = ws.stack("a").unwrap();
        let names: Vec<&str> = back.names().iter().map(String::as_str).collect();
        assert_eq!(
            names,
            ["blue", "green", "red", "nir", "swir1", "swir2", "tirs1", "tirs2", "airtemp"]
        );
        for (name, g) in s.channels() {
            assert_eq!(back.channel(name).unwrap().values(), g.values());
        }
        assert!(back
            .channel(AIRTEMP)
            .unwrap()
            .values()
            .iter()
            .all(|&v| v == 21.5));
        assert!(matches!(ws.stack("nope"), Err(Error::SceneNotFound(_))));
    }

    #[test]
    fn gridded_air_temperature_is_identity() {
        let dir = tempfile::tempdir().unwrap();
        init(dir.path());
        let mut s = stack(summer());
        let air = GeoGrid::from_fn(grid(), DEFAULT_NODATA, |c, r| {
            Some(18.0 + (c * r) as f32 * 0.25)
        })
        .unwrap();
        s.replace_channel(AIRTEMP, air.clone()).unwrap();
        let meta = SceneMeta {
            timestamp: summer(),
            cloud_fraction: 0.0,
            air_temp_c: None,
        };
        write_scene(dir.path(), "g", &meta, &s, true).unwrap();
        let ws = catalog_scenes(dir.path()).unwrap();
        assert_eq!(
            ws.stack("g").unwrap().channel(AIRTEMP).unwrap().values(),
            air.values()
        );
    }

    #[test]
    fn missing_band_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        init(dir.path());
        let meta = SceneMeta {
            timestamp: summer(),
            cloud_fraction: 0.1,
            air_temp_c: Some(20.0),
        };
        write_scene(dir.path(), "a", &meta, &stack(summer()), false).unwrap();
        write_scene(dir.path(), "b", &meta, &stack(summer()), false).unwrap();
        fs::remove_file(dir.path().join("scenes/b/red.grid")).unwrap();
        match catalog_scenes(dir.path()) {
            Err(Error::InvalidScenes(issues)) => {
                assert_eq!(issues.len(), 1);
                assert_eq!(issues[0].scene_id, "b");
                assert!(issues[0].problem.contains("red"));
            }
            other => panic!("expected invalid scenes, got {other:?}"),
        }
    }

    #[test]
    fn misaligned_band_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        init(dir.path());
        let meta = SceneMeta {
            timestamp: summer(),
            cloud_fraction: 0.1,
            air_temp_c: Some(20.0),
        };
        write_scene(dir.path(), "a", &meta, &stack(summer()), false).unwrap();
        let shifted = GridSpec {
            origin_x: 500_030.0,
            ..grid()
        };
        write_grid(
            dir.path().join("scenes/a/nir.grid"),
            &GeoGrid::filled(shifted, 0.3, DEFAULT_NODATA).unwrap(),
        )
        .unwrap();
        assert!(matches!(
            catalog_scenes(dir.path()),
            Err(Error::InvalidScenes(_))
        ));
    }

    fn record(ts: DateTime<Utc>, cloud: f64) -> SceneRecord {
        SceneRecord {
            scene_id: ts.to_rfc3339(),
            timestamp: ts,
            band_paths: BTreeMap::new(),
            air_temp: AirTemperature::Scalar(20.0),
            cloud_fraction: cloud,
        }
    }

    #[test]
    fn filter_examples() {
        let f = SceneFilter::default();
        assert!(!f.accepts(
            &record(Utc.with_ymd_and_hms(2021, 1, 10, 10, 0, 0).unwrap(), 0.0),
            0.0
        ));
        assert!(f.accepts(&record(summer(), 0.29), 0.0));
        assert!(f.accepts(&record(summer(), 0.3), 0.0));
        assert!(!f.accepts(&record(summer(), 0.31), 0.0));
        // 08:30 UTC is 10:30 at UTC+2
        let early = Utc.with_ymd_and_hms(2021, 7, 3, 8, 30, 0).unwrap();
        assert!(!f.accepts(&record(early, 0.0), 0.0));
        assert!(f.accepts(&record(early, 0.0), 2.0));
        let four = Utc.with_ymd_and_hms(2021, 7, 3, 16, 0, 0).unwrap();
        assert!(!f.accepts(&record(four, 0.0), 0.0));
    }

    #[test]
    fn filter_matches_predicate_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let scenes: Vec<SceneRecord> = (0..20)
            .map(|_| {
                let ts = Utc
                    .with_ymd_and_hms(
                        2020,
                        rng.random_range(1..=12),
                        rng.random_range(1..=28),
                        rng.random_range(0..24),
                        rng.random_range(0..60),
                        0,
                    )
                    .unwrap();
                record(ts, rng.random_range(0.0..0.6))
            })
            .collect();
        let f = SceneFilter::default();
        let got = filter_scenes(&scenes, &f, 3.0);
        let expect: Vec<SceneRecord> = scenes
            .iter()
            .filter(|s| {
                let l = s.timestamp + Duration::hours(3);
                let h = l.hour() as f64 + l.minute() as f64 / 60.0;
                [6, 7, 8].contains(&l.month())
                    && (9.0..16.0).contains(&h)
                    && s.cloud_fraction <= 0.3
            })
            .cloned()
            .collect();
        assert_eq!(got, expect);
        assert_eq!(filter_scenes(&got, &f, 3.0), got);
    }

    #[test]
    fn truth_lst_masks_clouds() {
        let dir = tempfile::tempdir().unwrap();
        init(dir.path());
        let ws = Workspace {
            root: dir.path().into(),
            config: WorkspaceConfig::new("t", grid()),
            scenes: vec![],
        };
        let mut s = stack(summer());
        s.replace_channel(
            "tirs1",
            GeoGrid::filled(grid(), 30.0, DEFAULT_NODATA).unwrap(),
        )
        .unwrap();
        s.replace_channel(
            "tirs2",
            GeoGrid::filled(grid(), 32.0, DEFAULT_NODATA).unwrap(),
        )
        .unwrap();
        let lulc = GeoGrid::from_fn(grid(), DEFAULT_NODATA, |c, _| {
            Some(if c == 0 { 10.0 } else { 7.0 })
        })
        .unwrap();
        let lst = ws.truth_lst(&s, &lulc).unwrap();
        for r in 0..3 {
            assert_eq!(lst.get(0, r), None);
            assert_eq!(lst.get(1, r), Some(31.0));
        }
    }
}
