use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use heatlab_core::climate::ScenarioTable;
use heatlab_core::cooling::GradientAxis;
use heatlab_core::eval::SplitStrategy;
use heatlab_core::intervention::InterventionSpec;
use heatlab_core::pipeline::{
    compare_cooling, cooling_analysis, cooling_report_path, eval_directories, evaluate_variant,
    extrapolation_for, extrapolation_report_path, fit_baseline_scenes, forecast_city,
    forecast_stem, gradient_analysis, intervene, intervention_dir, intervention_id, load_variant,
    read_json, save_forecast, save_intervention, source_sink_analysis, stored_guard, CityContext,
    CoolingReport, SceneSplit, BASELINE_MODEL_PATH, TRUTH_VARIANT,
};
use heatlab_core::predictor::{
    generate_synthetic_city, write_synthetic_workspace, Predictor, SyntheticWorldSpec,
};
use heatlab_core::raster::{ensure_aligned, read_grid, resample_majority, write_grid, GeoGrid};
use heatlab_core::workspace::{write_json, Workspace};
use heatlab_core::Error;

use crate::manifest::{config_hash, RunManifest};
use crate::*;

/// What a command did, for its manifest.
struct Outcome {
    root: PathBuf,
    command: String,
    config: Value,
    params: Value,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
    seed: Option<u64>,
    summary: Value,
}

pub(crate) fn dispatch(command: Command, argv: Vec<String>) -> CliResult<()> {
    let start = Instant::now();
    let outcome = match command {
        Command::Synth(a) => synth(a)?,
        Command::Ingest(a) => ingest(a)?,
        Command::Analyze(a) => analyze(a)?,
        Command::FitBaseline(a) => fit(a)?,
        Command::Predict(a) => predict(a)?,
        Command::Eval(a) => eval(a)?,
        Command::Split(a) => split(a)?,
        Command::Forecast(a) => forecast(a)?,
        Command::Inpaint(a) => inpaint(a)?,
        Command::Serve(a) => return serve(a),
    };
    let effective_config = json!({ "workspace": outcome.config, "command": outcome.params });
    let manifest = RunManifest {
        command: outcome.command,
        argv,
        config_hash: config_hash(&effective_config),
        effective_config,
        inputs: outcome.inputs,
        outputs: outcome
            .outputs
            .iter()
            .map(|p| p.strip_prefix(&outcome.root).unwrap_or(p).to_path_buf())
            .collect(),
        seed: outcome.seed,
        toolkit_version: env!("CARGO_PKG_VERSION").to_string(),
        wall_time_ms: start.elapsed().as_millis() as u64,
        summary: outcome.summary,
    };
    let path = manifest.write(&outcome.root)?;
    let text = serde_json::to_string_pretty(&manifest.summary).map_err(Error::from)?;
    // A closed stdout (e.g. piped into `head`) is not a failure of the run.
    let _ = writeln!(std::io::stdout().lock(), "{text}");
    tracing::info!(manifest = %path.display(), "done");
    Ok(())
}

fn to_value<T: Serialize>(v: &T) -> CliResult<Value> {
    Ok(serde_json::to_value(v).map_err(Error::from)?)
}

/// Opens a workspace and applies command-line overrides to its config.
fn open_city(
    arg: &WorkspaceArg,
    edit: impl FnOnce(&mut heatlab_core::config::AnalysisConfig),
) -> CliResult<CityContext> {
    let mut ws = Workspace::open(resolve(&arg.workspace))?;
    if let Some(seed) = arg.seed {
        ws.config.analysis.seed = seed;
    }
    edit(&mut ws.config.analysis);
    Ok(CityContext::new(ws)?)
}

fn outcome(ctx: &CityContext, command: &str, params: Value) -> CliResult<Outcome> {
    Ok(Outcome {
        root: ctx.root().to_path_buf(),
        command: command.into(),
        config: to_value(&ctx.ws.config)?,
        params,
        inputs: vec![ctx.root().to_path_buf()],
        outputs: Vec::new(),
        seed: Some(ctx.analysis().seed),
        summary: Value::Null,
    })
}

fn synth(a: SynthArgs) -> CliResult<Outcome> {
    let mut spec: SyntheticWorldSpec = match a.config.as_str() {
        "default" => SyntheticWorldSpec::default(),
        path => read_json(&resolve(Path::new(path)))?,
    };
    if let Some(v) = a.seed {
        spec.seed = v;
    }
    if let Some(v) = a.size {
        spec.size = v;
    }
    if let Some(v) = a.noise {
        spec.noise_std = v;
    }
    if let Some(v) = a.scenes {
        spec.scene_count = v;
    }
    if let Some(v) = a.city_id {
        spec.city_id = v;
    }
    spec.validate()?;
    let root = resolve(&a.out);
    let world = generate_synthetic_city(&spec)?;
    let ws = write_synthetic_workspace(&root, &world)?;
    Ok(Outcome {
        command: "synth".into(),
        config: to_value(&ws.config)?,
        params: to_value(&spec)?,
        inputs: Vec::new(),
        outputs: vec![root.clone()],
        seed: Some(spec.seed),
        summary: json!({
            "city_id": ws.city_id(),
            "scenes": ws.scenes.len(),
            "parks": world.parks.len(),
        }),
        root,
    })
}

fn read_any_grid(path: &Path) -> CliResult<GeoGrid> {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .unwrap_or("")
        .to_ascii_lowercase();
    if ext == "tif" || ext == "tiff" {
        Ok(heatlab_core::raster::geotiff::import_geotiff(path)?)
    } else {
        Ok(read_grid(path)?)
    }
}

#[derive(Serialize)]
struct CatalogEntry {
    scene_id: String,
    timestamp: chrono::DateTime<chrono::Utc>,
    cloud_fraction: f64,
    passes_filter: bool,
}

fn ingest(a: IngestArgs) -> CliResult<Outcome> {
    let root = resolve(&a.ws.workspace);
    let ws = Workspace::open(&root)?;
    let mut inputs = vec![root.clone()];
    let mut outputs = Vec::new();
    if let Some(src) = &a.lulc {
        let lulc = read_any_grid(src)?;
        let lulc = if lulc.spec() == ws.grid() {
            lulc
        } else {
            resample_majority(&lulc, ws.grid())?
        };
        let path = root.join(&ws.config.lulc_path);
        write_grid(&path, &lulc)?;
        inputs.push(src.clone());
        outputs.push(path);
    }
    if let (Some(src), Some(scene), Some(band)) = (&a.geotiff, &a.scene, &a.band) {
        ws.scene(scene)?;
        let grid = read_any_grid(src)?.with_band(band.clone());
        ensure_aligned(ws.grid(), &grid)?;
        let path = root.join("scenes").join(scene).join(format!("{band}.grid"));
        write_grid(&path, &grid)?;
        inputs.push(src.clone());
        outputs.push(path);
    }
    // reopen so imports are validated together with the rest
    let mut ws = Workspace::open(&root)?;
    if let Some(seed) = a.ws.seed {
        ws.config.analysis.seed = seed;
    }
    let ctx = CityContext::new(ws)?;
    let accepted = ctx.scene_ids();
    ctx.ws.scenes.par_iter().try_for_each(|s| {
        let stack = ctx.ws.build_stack(s)?;
        ctx.truth(&stack).map(|_| ())
    })?;
    let catalog: Vec<CatalogEntry> = ctx
        .ws
        .scenes
        .iter()
        .map(|s| CatalogEntry {
            scene_id: s.scene_id.clone(),
            timestamp: s.timestamp,
            cloud_fraction: s.cloud_fraction,
            passes_filter: accepted.contains(&s.scene_id),
        })
        .collect();
    let path = root.join("catalog.json");
    write_json(&path, &catalog)?;
    outputs.push(path);
    let mut o = outcome(
        &ctx,
        "ingest",
        to_value(
            &json!({ "lulc": a.lulc, "geotiff": a.geotiff, "scene": a.scene, "band": a.band }),
        )?,
    )?;
    o.inputs = inputs;
    o.outputs = outputs;
    o.summary = json!({
        "scenes": catalog.len(),
        "passing_filter": accepted.len(),
        "parks": ctx.parks.count(),
    });
    Ok(o)
}

fn variant_predictor(
    ctx: &CityContext,
    variant: Option<&str>,
) -> CliResult<Option<Box<dyn Predictor>>> {
    match variant {
        None | Some(TRUTH_VARIANT) => Ok(None),
        Some(v) => Ok(Some(load_variant(ctx, v)?)),
    }
}

fn analyze(a: AnalyzeArgs) -> CliResult<Outcome> {
    let ctx = open_city(&a.ws, |_| {})?;
    let predictor = variant_predictor(&ctx, a.variant.as_deref())?;
    let p = predictor.as_deref();
    let label = p.map_or(TRUTH_VARIANT, |p| p.identity()).to_string();
    let suffix = if p.is_some() {
        format!("-{label}")
    } else {
        String::new()
    };
    let dir = ctx.root().join("analysis");
    let (command, path, summary) = match a.analysis {
        Analysis::Cooling => {
            let r = cooling_analysis(&ctx, p)?;
            let path = cooling_report_path(ctx.root(), &label);
            write_json(&path, &r)?;
            let depth = |prof: &heatlab_core::cooling::CoolingProfile| {
                prof.mean_dt.iter().flatten().copied().reduce(f64::min)
            };
            let summary = json!({
                "variant": label,
                "parks": r.park_areas_m2.len(),
                "scenes": r.scene_ids.len(),
                "internal_min_dt": depth(&r.cooling.internal),
                "spillover_min_dt": depth(&r.cooling.spillover),
            });
            ("analyze-cooling", path, summary)
        }
        Analysis::Gradient => {
            let axis = match a.axis {
                AxisArg::Deciles => GradientAxis::BuiltFractionDecile,
                AxisArg::Radial => GradientAxis::RadialDistance {
                    bin_width: ctx.analysis().radial_bin_width,
                },
            };
            let r = gradient_analysis(&ctx, axis, p)?;
            let path = dir.join(format!("gradient{suffix}.json"));
            write_json(&path, &r)?;
            let top = r
                .gradient
                .mean_anomaly
                .iter()
                .rev()
                .flatten()
                .next()
                .copied();
            (
                "analyze-gradient",
                path,
                json!({ "variant": label, "top_bin_anomaly": top }),
            )
        }
        Analysis::SourceSink => {
            let r = source_sink_analysis(&ctx, p)?;
            let path = dir.join(format!("source-sink{suffix}.json"));
            write_json(&path, &r)?;
            (
                "analyze-source-sink",
                path,
                json!({ "variant": label, "categories": r.table.categories.len() }),
            )
        }
    };
    let mut o = outcome(
        &ctx,
        command,
        json!({ "variant": a.variant, "axis": format!("{:?}", a.axis) }),
    )?;
    o.outputs.push(path);
    o.summary = summary;
    Ok(o)
}

fn read_split(ctx: &CityContext, path: &Path) -> CliResult<SceneSplit> {
    let path = if path.is_relative() && !path.exists() {
        ctx.root().join(path)
    } else {
        path.to_path_buf()
    };
    let split: SceneSplit = read_json(&path)?;
    if !split.plan.is_partition_of(split.scene_ids.len())
        || split.keys.len() != split.scene_ids.len()
    {
        return Err(Error::Split(format!("{} is not a valid split plan", path.display())).into());
    }
    Ok(split)
}

fn fit(a: FitArgs) -> CliResult<Outcome> {
    let ctx = open_city(&a.ws, |_| {})?;
    let train = match &a.split {
        Some(p) => {
            let s = read_split(&ctx, p)?;
            Some(s.ids(&s.plan.train_val().collect::<Vec<_>>()))
        }
        None => None,
    };
    let model = fit_baseline_scenes(&ctx, train.as_deref())?;
    let path = ctx.root().join(BASELINE_MODEL_PATH);
    write_json(&path, &model)?;
    let mut o = outcome(&ctx, "fit-baseline", json!({ "split": a.split }))?;
    o.outputs.push(path);
    o.summary = json!({
        "train_scenes": train.map_or(ctx.scene_ids().len(), |t| t.len()),
        "model": model,
    });
    Ok(o)
}

fn predict(a: PredictArgs) -> CliResult<Outcome> {
    let ctx = open_city(&a.ws, |_| {})?;
    let p = load_variant(&ctx, &a.variant)?;
    let dir = ctx.ws.predictions_dir(&a.variant);
    let ids = ctx.scene_ids();
    let outputs: Vec<PathBuf> = ids
        .par_iter()
        .map(|id| {
            let g = p.predict(&ctx.stack(id)?)?;
            let path = dir.join(format!("{id}.grid"));
            write_grid(&path, &g)?;
            Ok(path)
        })
        .collect::<heatlab_core::Result<_>>()?;
    let mut o = outcome(&ctx, "predict", json!({ "variant": a.variant }))?;
    o.outputs = outputs;
    o.summary = json!({ "variant": a.variant, "scenes": ids.len() });
    Ok(o)
}

fn eval(a: EvalArgs) -> CliResult<Outcome> {
    if let (Some(truth), Some(pred)) = (&a.truth, &a.pred) {
        let (truth, pred) = (resolve(truth), resolve(pred));
        let (ids, metrics) = eval_directories(&truth, &pred)?;
        let out = a.out.clone().unwrap_or_else(|| pred.join("eval.json"));
        let report = json!({ "scenes": ids, "metrics": metrics });
        write_json(&out, &report)?;
        let root = out.parent().map(Path::to_path_buf).unwrap_or_default();
        return Ok(Outcome {
            command: "eval".into(),
            config: Value::Null,
            params: json!({ "truth": truth, "pred": pred }),
            inputs: vec![truth, pred],
            outputs: vec![out],
            seed: None,
            summary: json!({ "scenes": ids.len(), "metrics": metrics }),
            root,
        });
    }
    let (Some(ws), Some(variant)) = (&a.workspace, &a.variant) else {
        return Err(CliError::Usage(
            "eval needs --workspace with --variant, or --truth with --pred".into(),
        ));
    };
    let ctx = open_city(
        &WorkspaceArg {
            workspace: ws.clone(),
            seed: a.seed,
        },
        |_| {},
    )?;
    let p = load_variant(&ctx, variant)?;
    let report = evaluate_variant(&ctx, p.as_ref(), None)?;
    let reports = ctx.root().join("reports");
    let mut o = outcome(
        &ctx,
        "eval",
        json!({ "variant": variant, "split": a.split }),
    )?;
    let path = reports.join(format!("eval-{variant}.json"));
    write_json(&path, &report)?;
    o.outputs.push(path);
    let mut summary = json!({ "variant": variant, "pooled": report.pooled });

    let (tp, pp) = (
        cooling_report_path(ctx.root(), TRUTH_VARIANT),
        cooling_report_path(ctx.root(), variant),
    );
    if tp.exists() && pp.exists() {
        let cmp = compare_cooling(
            &read_json::<CoolingReport>(&tp)?,
            &read_json::<CoolingReport>(&pp)?,
        )?;
        let path = reports.join(format!("profiles-{variant}.json"));
        write_json(&path, &cmp)?;
        o.outputs.push(path);
        summary["profiles"] = to_value(&cmp)?;
    }
    if let Some(split) = &a.split {
        let s = read_split(&ctx, split)?;
        let r = extrapolation_for(&ctx, &s, p.as_ref())?;
        let path = extrapolation_report_path(ctx.root(), variant);
        write_json(&path, &r)?;
        o.outputs.push(path);
        summary["extrapolation"] = to_value(&r)?;
    }
    o.summary = summary;
    Ok(o)
}

fn split(a: SplitArgs) -> CliResult<Outcome> {
    let ctx = open_city(&a.ws, |c| {
        if let Some(q) = a.q {
            c.split.high_heat_q = q;
        }
    })?;
    let strategy = match a.strategy {
        StrategyArg::Random => SplitStrategy::Random,
        StrategyArg::HighHeat => SplitStrategy::HighHeat,
    };
    let s = heatlab_core::pipeline::split_scenes(&ctx, strategy, None, None)?;
    let name = match strategy {
        SplitStrategy::Random => "random",
        SplitStrategy::HighHeat => "high-heat",
    };
    let path = ctx.root().join("splits").join(format!("{name}.json"));
    write_json(&path, &s)?;
    let (train, val, test) = s.plan.sizes();
    let mut o = outcome(&ctx, "split", json!({ "strategy": name, "q": a.q }))?;
    o.outputs.push(path);
    o.summary = json!({
        "strategy": name,
        "train": train,
        "val": val,
        "test": test,
        "threshold": s.plan.threshold,
        "warning": s.plan.warning,
    });
    Ok(o)
}

fn forecast(a: ForecastArgs) -> CliResult<Outcome> {
    let ctx = open_city(&a.ws, |c| {
        if let Some(t) = a.threshold {
            c.uhi_threshold = t;
        }
    })?;
    if a.variant == TRUTH_VARIANT {
        return Err(CliError::Usage("forecast needs a predictor variant".into()));
    }
    let table: ScenarioTable = ctx.scenarios()?;
    let scenario = table.find(&a.rcp, a.year)?.clone();
    let p = load_variant(&ctx, &a.variant)?;
    let guard = stored_guard(&ctx, &a.variant)?;
    let report = forecast_city(&ctx, &scenario, p.as_ref(), guard)?;
    let path = save_forecast(ctx.root(), &report)?;
    let stem = forecast_stem(&report);
    let mut o = outcome(
        &ctx,
        "forecast",
        json!({ "rcp": a.rcp, "year": a.year, "variant": a.variant }),
    )?;
    o.inputs
        .push(ctx.root().join(&ctx.analysis().scenarios_path));
    o.outputs = vec![
        path.clone(),
        path.with_file_name(format!("{stem}.grid")),
        path.with_file_name(format!("{stem}.png")),
    ];
    o.summary = json!({
        "scenario": scenario.id(),
        "variant": report.variant,
        "exceed_fraction": report.extent.exceed_fraction,
        "exceed_area_km2": report.extent.exceed_area_km2,
        "out_of_validated_range": report.out_of_validated_range,
    });
    Ok(o)
}

fn inpaint(a: InpaintArgs) -> CliResult<Outcome> {
    let ctx = open_city(&a.ws, |_| {})?;
    let spec_path = resolve(&a.spec);
    let spec: InterventionSpec = read_json(&spec_path)?;
    spec.validate()?;
    let max = ctx.analysis().intervention.max_pixels;
    if ctx.ws.grid().len() > max {
        return Err(Error::InvalidParameter(format!(
            "grid exceeds the {max}-pixel intervention guard"
        ))
        .into());
    }
    let scene = match &a.scene {
        Some(s) => s.clone(),
        None => ctx
            .scene_ids()
            .into_iter()
            .next()
            .ok_or_else(|| Error::Workspace("no scene passes the scene filter".into()))?,
    };
    let p = load_variant(&ctx, &a.variant)?;
    let id = intervention_id(&scene, &a.variant, &spec)?;
    let result = intervene(&ctx, Some(&scene), p.as_ref(), &spec)?;
    let path = save_intervention(ctx.root(), &id, &result)?;
    let mut o = outcome(
        &ctx,
        "inpaint",
        json!({ "spec": spec, "scene": scene, "variant": a.variant }),
    )?;
    o.inputs.push(spec_path);
    o.outputs = vec![path, intervention_dir(ctx.root(), &id)];
    o.seed = Some(spec.seed);
    o.summary = json!({
        "id": id,
        "scene_id": scene,
        "edited_pixels": result.edited_pixels,
        "mean_delta_in_mask": result.mean_delta_in_mask,
    });
    Ok(o)
}

fn serve(a: ServeArgs) -> CliResult<()> {
    let root = match a
        .workspaces
        .or_else(|| std::env::var_os(WORKSPACES_ENV).map(PathBuf::from))
    {
        Some(r) => r,
        None => {
            return Err(CliError::Usage(format!(
                "serve needs --workspaces or ${WORKSPACES_ENV}"
            )))
        }
    };
    let rt = tokio::runtime::Runtime::new().map_err(|e| CliError::Internal(e.to_string()))?;
    rt.block_on(heatlab_service::serve(&root, a.port))
        .map_err(|e| match e.downcast::<Error>() {
            Ok(core) => CliError::Core(core),
            Err(other) => CliError::Internal(other.to_string()),
        })
}
