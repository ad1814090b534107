//! Workspace-level runs shared by the command line and the HTTP service.
//!
//! Outputs live under the workspace:
//!
//! ```text
//! models/baseline.json
//! analysis/cooling-<variant>.json     variant `truth` for ground truth
//! analysis/gradient.json, analysis/source-sink.json
//! splits/<strategy>.json
//! reports/eval-<variant>.json, reports/extrapolation-<variant>.json
//! forecasts/<scenario>-<variant>.json (.grid, .png)
//! interventions/<id>/result.json (+ grids)
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::climate::{
    forecast, mean_map, ClimateScenario, ExtrapolationGuard, ForecastReport, ForecastSettings,
    ScenarioTable,
};
use crate::config::{AnalysisConfig, OrderingKey};
use crate::cooling::{
    aggregate_park_cooling, anomaly, built_fraction, park_cooling, rural_reference, source_sink,
    urban_gradient, BaselineSpec, CoolingProfile, GradientAxis, ParkCooling, ProfileBins,
    ProfileSide, SourceSinkTable, UrbanGradient,
};
use crate::error::{Error, Result};
use crate::eval::{
    compare_profiles, extrapolation_report, grid_metrics, metrics, split_high_heat, split_random,
    ExtrapolationReport, MetricReport, SplitPlan, SplitStrategy,
};
use crate::intervention::{
    evaluate_intervention, InterventionContext, InterventionResult, InterventionSpec,
    LandcoverContext,
};
use crate::landcover::{built_mask, extract_parks, DistanceField, ParkSet};
use crate::predictor::{
    load_external_predictions, LinearLstModel, NormalEquations, OraclePredictor, Predictor,
};
use crate::raster::{ensure_aligned, read_grid, write_grid, GeoGrid, PixelMask, DEFAULT_NODATA};
use crate::render::{
    render_categorical, render_ramp, render_rgb, LayerKind, LayerStats, Palette, Ramp,
};
use crate::spectral::ndvi;
use crate::workspace::{write_json, SceneStack, Workspace, AIRTEMP};

pub const TRUTH_VARIANT: &str = "truth";
pub const BASELINE_VARIANT: &str = "baseline";
pub const ORACLE_VARIANT: &str = "oracle";
pub const BASELINE_MODEL_PATH: &str = "models/baseline.json";

pub fn cooling_report_path(root: &Path, variant: &str) -> PathBuf {
    root.join("analysis")
        .join(format!("cooling-{variant}.json"))
}

pub fn extrapolation_report_path(root: &Path, variant: &str) -> PathBuf {
    root.join("reports")
        .join(format!("extrapolation-{variant}.json"))
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Sidecar {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// A workspace with its static layers derived once.
#[derive(Debug, Clone)]
pub struct CityContext {
    pub ws: Workspace,
    pub lulc: GeoGrid,
    pub built: PixelMask,
    pub parks: ParkSet,
    /// `None` when the city has no park or is all park.
    pub field: Option<DistanceField>,
    pub built_fraction: GeoGrid,
}

impl CityContext {
    pub fn open(root: impl AsRef<Path>) -> Result<Self> {
        Self::new(Workspace::open(root)?)
    }

    pub fn new(ws: Workspace) -> Result<Self> {
        let a = ws.analysis();
        a.validate()?;
        let lulc = ws.load_lulc()?;
        let built = built_mask(&lulc, &ws.config.codes(&a.built_categories));
        let parks = extract_parks(
            &lulc,
            &ws.config.codes(&a.green_categories),
            a.min_park_area_m2,
        );
        let pm = parks.mask();
        let field = if pm.any() && !pm.all() {
            Some(DistanceField::from_parks(&parks)?)
        } else {
            None
        };
        let built_fraction = built_fraction(&built, a.built_fraction_window)?;
        Ok(CityContext {
            ws,
            lulc,
            built,
            parks,
            field,
            built_fraction,
        })
    }

    pub fn root(&self) -> &Path {
        &self.ws.root
    }

    pub fn analysis(&self) -> &AnalysisConfig {
        self.ws.analysis()
    }

    pub fn scene_ids(&self) -> Vec<String> {
        self.ws
            .filtered_scenes()
            .into_iter()
            .map(|s| s.scene_id)
            .collect()
    }

    fn require_scenes(&self) -> Result<Vec<String>> {
        let ids = self.scene_ids();
        if ids.is_empty() {
            return Err(Error::Workspace("no scene passes the scene filter".into()));
        }
        Ok(ids)
    }

    pub fn stack(&self, scene_id: &str) -> Result<SceneStack> {
        self.ws.stack(scene_id)
    }

    pub fn truth(&self, stack: &SceneStack) -> Result<GeoGrid> {
        self.ws.truth_lst(stack, &self.lulc)
    }

    /// Distance to the nearest park, or all nodata without parks.
    pub fn park_outside(&self) -> Result<GeoGrid> {
        match &self.field {
            Some(f) => Ok(f.outside.clone()),
            None => GeoGrid::filled(*self.ws.grid(), DEFAULT_NODATA, DEFAULT_NODATA),
        }
    }

    fn parks_or_err(&self) -> Result<&DistanceField> {
        self.field.as_ref().ok_or_else(|| {
            Error::DegenerateMask("land cover holds no park above the minimum area".into())
        })
    }

    pub fn landcover_context(&self) -> LandcoverContext {
        LandcoverContext {
            legend: self.ws.config.lulc_legend.clone(),
            built_codes: self.ws.config.codes(&self.analysis().built_categories),
            min_donor_pixels: self.analysis().intervention.min_donor_pixels,
        }
    }

    pub fn intervention_context(&self) -> InterventionContext {
        let a = self.analysis();
        InterventionContext {
            landcover: self.landcover_context(),
            green_codes: self.ws.config.codes(&a.green_categories),
            min_park_area: a.min_park_area_m2,
            baseline: a.baseline,
            bins: a.profile_bins,
        }
    }

    pub fn scenarios(&self) -> Result<ScenarioTable> {
        ScenarioTable::load(&self.root().join(&self.analysis().scenarios_path))
    }
}

/// LST for one scene: ground truth or a predictor's output.
pub fn scene_lst(
    ctx: &CityContext,
    stack: &SceneStack,
    predictor: Option<&dyn Predictor>,
) -> Result<GeoGrid> {
    match predictor {
        None => ctx.truth(stack),
        Some(p) => {
            let g = p.predict(stack)?;
            ensure_aligned(stack, &g)?;
            Ok(g)
        }
    }
}

fn variant_name(predictor: Option<&dyn Predictor>) -> String {
    predictor.map_or(TRUTH_VARIANT.to_string(), |p| p.identity().to_string())
}

/// Resolves a variant label: `baseline` (fitted model), `oracle` (synthetic
/// worlds only) or a directory of external predictions.
pub fn load_variant(ctx: &CityContext, variant: &str) -> Result<Box<dyn Predictor>> {
    match variant {
        BASELINE_VARIANT => {
            let path = ctx.root().join(BASELINE_MODEL_PATH);
            if !path.exists() {
                return Err(Error::Predictor {
                    variant: variant.into(),
                    message: "no fitted baseline model; run fit-baseline".into(),
                });
            }
            let m: LinearLstModel = read_json(&path)?;
            m.validate()?;
            Ok(Box::new(m))
        }
        ORACLE_VARIANT => Ok(Box::new(OraclePredictor::load(
            ctx.root(),
            ctx.analysis().min_park_area_m2,
        )?)),
        other => {
            if other.is_empty() || other.contains(['/', '\\']) || other.starts_with('.') {
                return Err(Error::Predictor {
                    variant: other.into(),
                    message: "invalid variant label".into(),
                });
            }
            Ok(Box::new(load_external_predictions(&ctx.ws, other, None)?))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoolingReport {
    pub city_id: String,
    pub variant: String,
    pub scene_ids: Vec<String>,
    pub park_areas_m2: BTreeMap<u32, f64>,
    pub baseline: BaselineSpec,
    pub bins: ProfileBins,
    /// Parks whose baseline fell back to the citywide built mean in some scene.
    pub fallback_parks: Vec<u32>,
    pub cooling: ParkCooling,
}

impl CoolingReport {
    pub fn profile(&self, side: ProfileSide) -> &CoolingProfile {
        self.cooling.profile(side)
    }
}

/// Per-park internal and spillover profiles pooled over the filtered scenes.
pub fn cooling_analysis(
    ctx: &CityContext,
    predictor: Option<&dyn Predictor>,
) -> Result<CoolingReport> {
    let ids = ctx.require_scenes()?;
    let field = ctx.parks_or_err()?;
    let a = ctx.analysis();
    let per_scene: Vec<ParkCooling> = ids
        .par_iter()
        .map(|id| {
            let stack = ctx.stack(id)?;
            let lst = scene_lst(ctx, &stack, predictor)?;
            park_cooling(
                &lst,
                &ctx.parks,
                field,
                &ctx.built,
                &a.baseline,
                &a.profile_bins,
            )
        })
        .collect::<Result<_>>()?;
    let fallback_parks = ctx
        .parks
        .park_areas
        .keys()
        .copied()
        .filter(|id| per_scene.iter().any(|s| s.baselines[id].used_fallback))
        .collect();
    let cooling = aggregate_park_cooling(&per_scene)?;
    Ok(CoolingReport {
        city_id: ctx.ws.city_id().to_string(),
        variant: variant_name(predictor),
        scene_ids: ids,
        park_areas_m2: ctx.parks.park_areas.clone(),
        baseline: a.baseline,
        bins: a.profile_bins,
        fallback_parks,
        cooling,
    })
}

/// Mean over scenes of `LST − rural reference`.
pub fn mean_rural_anomaly(
    ctx: &CityContext,
    predictor: Option<&dyn Predictor>,
) -> Result<(Vec<String>, GeoGrid)> {
    let ids = ctx.require_scenes()?;
    let a = ctx.analysis();
    let maps: Vec<GeoGrid> = ids
        .par_iter()
        .map(|id| {
            let stack = ctx.stack(id)?;
            let lst = scene_lst(ctx, &stack, predictor)?;
            let reference = rural_reference(&lst, &ctx.built_fraction, a.rural_max_built_fraction)?;
            anomaly(&lst, reference)
        })
        .collect::<Result<_>>()?;
    Ok((ids, mean_map(&maps)?.with_band("anomaly")))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientReport {
    pub city_id: String,
    pub variant: String,
    pub scene_ids: Vec<String>,
    pub rural_max_built_fraction: f64,
    pub gradient: UrbanGradient,
}

pub fn gradient_analysis(
    ctx: &CityContext,
    axis: GradientAxis,
    predictor: Option<&dyn Predictor>,
) -> Result<GradientReport> {
    let (ids, dt) = mean_rural_anomaly(ctx, predictor)?;
    Ok(GradientReport {
        city_id: ctx.ws.city_id().to_string(),
        variant: variant_name(predictor),
        scene_ids: ids,
        rural_max_built_fraction: ctx.analysis().rural_max_built_fraction,
        gradient: urban_gradient(&dt, &ctx.built_fraction, axis)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceSinkReport {
    pub city_id: String,
    pub variant: String,
    pub scene_ids: Vec<String>,
    pub table: SourceSinkTable,
}

pub fn source_sink_analysis(
    ctx: &CityContext,
    predictor: Option<&dyn Predictor>,
) -> Result<SourceSinkReport> {
    let (ids, dt) = mean_rural_anomaly(ctx, predictor)?;
    Ok(SourceSinkReport {
        city_id: ctx.ws.city_id().to_string(),
        variant: variant_name(predictor),
        scene_ids: ids,
        table: source_sink(
            &dt,
            &ctx.lulc,
            &ctx.ws.config.lulc_legend,
            ctx.analysis().source_sink_quantiles,
        )?,
    })
}

/// Per-scene sample for split and extrapolation accounting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSample {
    pub scene_id: String,
    pub mean_lst: f64,
    pub mean_air_temp: f64,
}

impl SceneSample {
    pub fn key(&self, k: OrderingKey) -> f64 {
        match k {
            OrderingKey::MeanLst => self.mean_lst,
            OrderingKey::MeanAirTemp => self.mean_air_temp,
        }
    }
}

fn grid_mean(g: &GeoGrid, what: &str, scene: &str) -> Result<f64> {
    g.stats()
        .map(|s| s.mean)
        .ok_or_else(|| Error::Workspace(format!("scene {scene} has no valid {what} pixel")))
}

pub fn scene_samples(ctx: &CityContext) -> Result<Vec<SceneSample>> {
    ctx.require_scenes()?
        .par_iter()
        .map(|id| {
            let stack = ctx.stack(id)?;
            let truth = ctx.truth(&stack)?;
            Ok(SceneSample {
                scene_id: id.clone(),
                mean_lst: grid_mean(&truth, "truth", id)?,
                mean_air_temp: grid_mean(stack.channel(AIRTEMP)?, "air temperature", id)?,
            })
        })
        .collect()
}

/// A plan plus the scene ids its indices refer to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSplit {
    pub scene_ids: Vec<String>,
    pub keys: Vec<f64>,
    pub plan: SplitPlan,
}

impl SceneSplit {
    pub fn ids(&self, idx: &[usize]) -> Vec<String> {
        idx.iter().map(|&i| self.scene_ids[i].clone()).collect()
    }
}

pub fn split_scenes(
    ctx: &CityContext,
    strategy: SplitStrategy,
    q: Option<f64>,
    seed: Option<u64>,
) -> Result<SceneSplit> {
    let a = ctx.analysis();
    let samples = scene_samples(ctx)?;
    let key = a.split.ordering_key;
    let keys: Vec<f64> = samples.iter().map(|s| s.key(key)).collect();
    let seed = seed.unwrap_or(a.seed);
    let plan = match strategy {
        SplitStrategy::Random => split_random(keys.len(), a.split.fractions, seed)?,
        SplitStrategy::HighHeat => split_high_heat(
            &keys,
            key.name(),
            q.unwrap_or(a.split.high_heat_q),
            a.split.train_val_ratio,
            seed,
        )?,
    };
    Ok(SceneSplit {
        scene_ids: samples.into_iter().map(|s| s.scene_id).collect(),
        keys,
        plan,
    })
}

/// Fits the linear baseline on the given scenes (all filtered scenes when `None`).
pub fn fit_baseline_scenes(
    ctx: &CityContext,
    scene_ids: Option<&[String]>,
) -> Result<LinearLstModel> {
    let ids = match scene_ids {
        Some(ids) => ids.to_vec(),
        None => ctx.require_scenes()?,
    };
    let albedo = ctx.analysis().albedo;
    let parts: Vec<NormalEquations> = ids
        .par_iter()
        .map(|id| {
            let stack = ctx.stack(id)?;
            let truth = ctx.truth(&stack)?;
            let mut eq = NormalEquations::default();
            eq.add_scene(&stack, &truth, &albedo)?;
            Ok(eq)
        })
        .collect::<Result<_>>()?;
    // merge in scene order so the result does not depend on scheduling
    let mut eq = NormalEquations::default();
    for p in &parts {
        eq.merge(p);
    }
    eq.solve(&albedo)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneEval {
    pub scene_id: String,
    pub metrics: MetricReport,
    pub mean_pred: f64,
    pub mean_truth: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub city_id: String,
    pub variant: String,
    /// Pixel metrics pooled over all scenes.
    pub pooled: MetricReport,
    pub scenes: Vec<SceneEval>,
}

/// Pixel-level evaluation against ground truth on the given scenes.
pub fn evaluate_variant(
    ctx: &CityContext,
    predictor: &dyn Predictor,
    scene_ids: Option<&[String]>,
) -> Result<EvalReport> {
    let ids = match scene_ids {
        Some(ids) => ids.to_vec(),
        None => ctx.require_scenes()?,
    };
    let rows: Vec<(SceneEval, Vec<(f64, f64)>)> = ids
        .par_iter()
        .map(|id| {
            let stack = ctx.stack(id)?;
            let truth = ctx.truth(&stack)?;
            let pred = predictor.predict(&stack)?;
            ensure_aligned(&pred, &truth)?;
            let pairs: Vec<(f64, f64)> = pred
                .iter()
                .zip(truth.iter())
                .filter_map(|(p, t)| Some((p? as f64, t? as f64)))
                .collect();
            let (p, t): (Vec<f64>, Vec<f64>) = pairs.iter().copied().unzip();
            let m = metrics(&p, &t)?;
            let n = p.len() as f64;
            Ok((
                SceneEval {
                    scene_id: id.clone(),
                    metrics: m,
                    mean_pred: p.iter().sum::<f64>() / n,
                    mean_truth: t.iter().sum::<f64>() / n,
                },
                pairs,
            ))
        })
        .collect::<Result<_>>()?;
    let (p, t): (Vec<f64>, Vec<f64>) = rows.iter().flat_map(|r| r.1.iter().copied()).unzip();
    Ok(EvalReport {
        city_id: ctx.ws.city_id().to_string(),
        variant: predictor.identity().to_string(),
        pooled: metrics(&p, &t)?,
        scenes: rows.into_iter().map(|r| r.0).collect(),
    })
}

/// Extrapolation accounting on scene means: keys from the split, truth as
/// scene-mean ground truth, prediction as scene-mean predicted LST.
pub fn extrapolation_for(
    ctx: &CityContext,
    split: &SceneSplit,
    predictor: &dyn Predictor,
) -> Result<ExtrapolationReport> {
    let eval = evaluate_variant(ctx, predictor, Some(&split.scene_ids))?;
    let pred: Vec<f64> = eval.scenes.iter().map(|s| s.mean_pred).collect();
    let truth: Vec<f64> = eval.scenes.iter().map(|s| s.mean_truth).collect();
    extrapolation_report(
        &split.plan,
        &split.keys,
        &pred,
        &truth,
        ctx.analysis().split.success_tolerance,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileComparison {
    pub variant: String,
    pub internal: MetricReport,
    pub spillover: MetricReport,
}

pub fn compare_cooling(truth: &CoolingReport, pred: &CoolingReport) -> Result<ProfileComparison> {
    Ok(ProfileComparison {
        variant: pred.variant.clone(),
        internal: compare_profiles(
            truth.profile(ProfileSide::Internal),
            pred.profile(ProfileSide::Internal),
        )?,
        spillover: compare_profiles(
            truth.profile(ProfileSide::Spillover),
            pred.profile(ProfileSide::Spillover),
        )?,
    })
}

/// Pooled pixel metrics over `<scene>.grid` files present in both directories.
pub fn eval_directories(truth_dir: &Path, pred_dir: &Path) -> Result<(Vec<String>, MetricReport)> {
    let list = |dir: &Path| -> Result<Vec<String>> {
        let mut v: Vec<String> = std::fs::read_dir(dir)
            .map_err(|e| Error::io(dir, e))?
            .filter_map(|e| e.ok())
            .filter_map(|e| {
                e.file_name()
                    .to_str()
                    .and_then(|n| n.strip_suffix(".grid"))
                    .map(String::from)
            })
            .collect();
        v.sort();
        Ok(v)
    };
    let preds = list(pred_dir)?;
    let ids: Vec<String> = list(truth_dir)?
        .into_iter()
        .filter(|id| preds.contains(id))
        .collect();
    if ids.is_empty() {
        return Err(Error::Metrics(
            "no scene present in both directories".into(),
        ));
    }
    let (mut p, mut t) = (Vec::new(), Vec::new());
    for id in &ids {
        let tg = read_grid(truth_dir.join(format!("{id}.grid")))?;
        let pg = read_grid(pred_dir.join(format!("{id}.grid")))?;
        ensure_aligned(&tg, &pg)?;
        grid_metrics(&pg, &tg)?;
        for (a, b) in pg.iter().zip(tg.iter()) {
            if let (Some(a), Some(b)) = (a, b) {
                p.push(a as f64);
                t.push(b as f64);
            }
        }
    }
    Ok((ids, metrics(&p, &t)?))
}

/// Guard from a stored extrapolation report for the variant, if any.
pub fn stored_guard(ctx: &CityContext, variant: &str) -> Result<Option<ExtrapolationGuard>> {
    let path = extrapolation_report_path(ctx.root(), variant);
    if !path.exists() {
        return Ok(None);
    }
    let r: ExtrapolationReport = read_json(&path)?;
    Ok(Some(ExtrapolationGuard::from_report(
        &r,
        ctx.analysis().split.ordering_key,
    )))
}

pub fn forecast_city(
    ctx: &CityContext,
    scenario: &ClimateScenario,
    predictor: &dyn Predictor,
    guard: Option<ExtrapolationGuard>,
) -> Result<ForecastReport> {
    let ids = ctx.require_scenes()?;
    let stacks: Vec<SceneStack> = ids
        .par_iter()
        .map(|id| ctx.stack(id))
        .collect::<Result<_>>()?;
    let settings = ForecastSettings {
        built: ctx.built.clone(),
        park_outside: ctx.park_outside()?,
        baseline: ctx.analysis().baseline,
        threshold: ctx.analysis().uhi_threshold,
        guard,
    };
    forecast(&stacks, scenario, predictor, &settings)
}

/// Evaluates an intervention on one scene (the first filtered scene when `None`).
pub fn intervene(
    ctx: &CityContext,
    scene_id: Option<&str>,
    predictor: &dyn Predictor,
    spec: &InterventionSpec,
) -> Result<InterventionResult> {
    let id = match scene_id {
        Some(id) => id.to_string(),
        None => ctx.require_scenes()?.remove(0),
    };
    let stack = ctx.stack(&id)?;
    evaluate_intervention(
        predictor,
        &stack,
        &ctx.lulc,
        spec,
        &ctx.intervention_context(),
    )
}

/// Content hash of an intervention request, used as its result id.
pub fn intervention_id(scene_id: &str, variant: &str, spec: &InterventionSpec) -> Result<String> {
    use sha2::{Digest, Sha256};
    let body = serde_json::to_vec(&(scene_id, variant, spec))?;
    Ok(hex::encode(&Sha256::digest(&body)[..8]))
}

pub fn write_report<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_json(path, value)
}

/// A rendered layer and its stats sidecar.
#[derive(Debug, Clone)]
pub struct RenderedLayer {
    pub png: Vec<u8>,
    pub stats: LayerStats,
}

/// Top of the reflectance range mapped to full brightness in RGB renders.
pub const RGB_MAX_REFLECTANCE: f64 = 0.3;

/// Renders one layer of a scene; `palette` overrides the layer's default
/// palette for continuous layers.
pub fn render_layer(
    ctx: &CityContext,
    layer: LayerKind,
    scene_id: &str,
    palette: Option<Palette>,
) -> Result<RenderedLayer> {
    let stack = ctx.stack(scene_id)?;
    let ramp = layer.default_ramp().map(|r| Ramp {
        palette: palette.unwrap_or(r.palette),
        ..r
    });
    let (image, stats) = match layer {
        LayerKind::Rgb => {
            let (r, g, b) = (
                stack.channel("red")?,
                stack.channel("green")?,
                stack.channel("blue")?,
            );
            (render_rgb(r, g, b, RGB_MAX_REFLECTANCE)?, None)
        }
        LayerKind::Lulc => (
            render_categorical(&ctx.lulc, &ctx.ws.config.lulc_legend),
            None,
        ),
        LayerKind::Ndvi | LayerKind::Lst | LayerKind::Anomaly => {
            let grid = match layer {
                LayerKind::Ndvi => ndvi(stack.channel("nir")?, stack.channel("red")?)?,
                LayerKind::Lst => ctx.truth(&stack)?,
                _ => {
                    let lst = ctx.truth(&stack)?;
                    let reference = rural_reference(
                        &lst,
                        &ctx.built_fraction,
                        ctx.analysis().rural_max_built_fraction,
                    )?;
                    anomaly(&lst, reference)?
                }
            };
            let ramp = ramp.expect("continuous layers carry a ramp");
            (render_ramp(&grid, &ramp), grid.stats())
        }
    };
    Ok(RenderedLayer {
        png: image.encode_png()?,
        stats: LayerStats::new(layer, stats, ramp),
    })
}

pub fn forecast_stem(report: &ForecastReport) -> String {
    format!("{}-{}", report.scenario.id(), report.variant)
}

/// Writes `forecasts/<scenario>-<variant>.json` plus the mean anomaly map
/// as a grid and a PNG.
pub fn save_forecast(root: &Path, report: &ForecastReport) -> Result<PathBuf> {
    let dir = root.join("forecasts");
    let stem = forecast_stem(report);
    let path = dir.join(format!("{stem}.json"));
    write_json(&path, report)?;
    if let Some(map) = &report.anomaly_map {
        write_grid(dir.join(format!("{stem}.grid")), map)?;
        let ramp = LayerKind::Anomaly.default_ramp().expect("anomaly ramp");
        write_bytes(
            &dir.join(format!("{stem}.png")),
            &render_ramp(map, &ramp).encode_png()?,
        )?;
    }
    Ok(path)
}

pub fn intervention_dir(root: &Path, id: &str) -> PathBuf {
    root.join("interventions").join(id)
}

pub const INTERVENTION_RESULT_FILE: &str = "result.json";

/// On-disk and wire form of a stored intervention.
#[derive(Debug, Serialize)]
pub struct InterventionRecord<'a> {
    pub id: &'a str,
    #[serde(flatten)]
    pub result: &'a InterventionResult,
}

/// Persists an intervention under `interventions/<id>/`: the JSON result,
/// before/after/delta grids with PNG renders, and the edited mask.
pub fn save_intervention(root: &Path, id: &str, result: &InterventionResult) -> Result<PathBuf> {
    let dir = intervention_dir(root, id);
    let thermal = LayerKind::Lst.default_ramp().expect("lst ramp");
    let diverging = LayerKind::Anomaly.default_ramp().expect("anomaly ramp");
    let layers = [
        ("before", &result.before_lst, thermal),
        ("after", &result.after_lst, thermal),
        ("delta", &result.delta, diverging),
    ];
    for (name, grid, ramp) in layers {
        if let Some(g) = grid {
            write_grid(dir.join(format!("{name}.grid")), g)?;
            write_bytes(
                &dir.join(format!("{name}.png")),
                &render_ramp(g, &ramp).encode_png()?,
            )?;
        }
    }
    if let Some(m) = &result.edited {
        write_grid(dir.join("edited.grid"), &m.to_grid())?;
    }
    let path = dir.join(INTERVENTION_RESULT_FILE);
    write_json(&path, &InterventionRecord { id, result })?;
    Ok(path)
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}
