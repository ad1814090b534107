//! HTTP API over a directory of heatlab workspaces.

mod error;

use std::collections::{BTreeMap, HashMap};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::header;
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use chrono::{DateTime, Utc};
use heatlab_core::climate::ForecastReport;
use heatlab_core::cooling::{CoolingProfile, ProfileSide};
use heatlab_core::eval::{compare_profiles, MetricReport};
use heatlab_core::intervention::InterventionSpec;
use heatlab_core::pipeline::{
    cooling_report_path, forecast_city, intervene, intervention_dir, intervention_id, load_variant,
    read_json, render_layer, save_intervention, stored_guard, CityContext, CoolingReport,
    BASELINE_MODEL_PATH, BASELINE_VARIANT, INTERVENTION_RESULT_FILE, ORACLE_VARIANT, TRUTH_VARIANT,
};
use heatlab_core::predictor::WORLD_SPEC_PATH;
use heatlab_core::raster::GridSpec;
use heatlab_core::render::{render_ramp, LayerKind, Palette, PALETTE_VERSION};
use heatlab_core::workspace::WORKSPACE_FILE;
use serde::{Deserialize, Serialize};

pub use error::{ApiError, ApiResult, ERROR_CATALOG};

pub const API_VERSION: &str = "1";

struct City {
    ctx: CityContext,
    /// Serializes intervention persistence within one workspace.
    writer: Mutex<()>,
    forecasts: Mutex<HashMap<(String, u32, String), Arc<ForecastReport>>>,
}

/// Workspaces loaded once at startup, keyed by city id.
#[derive(Clone, Default)]
pub struct AppState {
    cities: Arc<BTreeMap<String, Arc<City>>>,
}

impl AppState {
    /// Loads `root` itself if it is a workspace, otherwise every immediate
    /// subdirectory holding a `workspace.json`. A missing root yields no cities.
    pub fn discover(root: &Path) -> heatlab_core::Result<Self> {
        let mut dirs: Vec<PathBuf> = Vec::new();
        if root.join(WORKSPACE_FILE).exists() {
            dirs.push(root.to_path_buf());
        } else if root.is_dir() {
            let entries = std::fs::read_dir(root).map_err(|e| heatlab_core::Error::io(root, e))?;
            for e in entries.filter_map(|e| e.ok()) {
                if e.path().join(WORKSPACE_FILE).exists() {
                    dirs.push(e.path());
                }
            }
            dirs.sort();
        }
        let mut cities = BTreeMap::new();
        for dir in dirs {
            let ctx = CityContext::open(&dir)?;
            let id = ctx.ws.city_id().to_string();
            if cities.contains_key(&id) {
                tracing::warn!(city = %id, dir = %dir.display(), "duplicate city id ignored");
                continue;
            }
            cities.insert(
                id,
                Arc::new(City {
                    ctx,
                    writer: Mutex::new(()),
                    forecasts: Mutex::default(),
                }),
            );
        }
        Ok(AppState {
            cities: Arc::new(cities),
        })
    }

    pub fn city_ids(&self) -> Vec<String> {
        self.cities.keys().cloned().collect()
    }

    fn city(&self, id: &str) -> ApiResult<Arc<City>> {
        self.cities
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::new("city_not_found", format!("unknown city `{id}`")))
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/api/version", get(version))
        .route("/api/cities", get(cities))
        .route("/api/cities/{id}", get(city))
        .route("/api/cities/{id}/scenes", get(scenes))
        .route("/api/cities/{id}/layers/{layer}", get(layer_png))
        .route("/api/cities/{id}/layers/{layer}/stats", get(layer_stats))
        .route(
            "/api/cities/{id}/interventions",
            axum::routing::post(post_intervention),
        )
        .route(
            "/api/cities/{id}/interventions/{rid}",
            get(get_intervention),
        )
        .route("/api/cities/{id}/scenarios", get(scenarios))
        .route("/api/cities/{id}/scenarios/anomaly.png", get(scenario_png))
        .route("/api/cities/{id}/profiles", get(profiles))
        .fallback(|| async { ApiError::bad_request("no such endpoint") })
        .with_state(state)
}

/// Binds `0.0.0.0:port` and serves until the process ends.
pub async fn serve(root: &Path, port: u16) -> anyhow::Result<()> {
    let state = AppState::discover(root)?;
    tracing::info!(cities = ?state.city_ids(), "loaded workspaces");
    let addr = SocketAddr::from(([0, 0, 0, 0], port));
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(%addr, "listening");
    axum::serve(listener, router(state)).await?;
    Ok(())
}

async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> ApiResult<T> + Send + 'static,
) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::new("internal_error", e.to_string()))?
}

#[derive(Serialize)]
struct ErrorEntry {
    code: &'static str,
    status: u16,
    description: &'static str,
}

#[derive(Serialize)]
struct VersionInfo {
    api_version: &'static str,
    toolkit_version: &'static str,
    palette_version: u32,
    errors: Vec<ErrorEntry>,
}

async fn version() -> Json<VersionInfo> {
    Json(VersionInfo {
        api_version: API_VERSION,
        toolkit_version: env!("CARGO_PKG_VERSION"),
        palette_version: PALETTE_VERSION,
        errors: ERROR_CATALOG
            .iter()
            .map(|&(code, status, description)| ErrorEntry {
                code,
                status,
                description,
            })
            .collect(),
    })
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CitySummary {
    pub city_id: String,
    pub grid: GridSpec,
    pub scene_count: usize,
    pub filtered_scene_count: usize,
    pub date_range: Option<(DateTime<Utc>, DateTime<Utc>)>,
}

fn summary(c: &City) -> CitySummary {
    let ws = &c.ctx.ws;
    let times = ws.scenes.iter().map(|s| s.timestamp);
    CitySummary {
        city_id: ws.city_id().to_string(),
        grid: *ws.grid(),
        scene_count: ws.scenes.len(),
        filtered_scene_count: ws.filtered_scenes().len(),
        date_range: times.clone().min().zip(times.max()),
    }
}

async fn cities(State(s): State<AppState>) -> Json<Vec<CitySummary>> {
    Json(s.cities.values().map(|c| summary(c)).collect())
}

async fn city(
    State(s): State<AppState>,
    UrlPath(id): UrlPath<String>,
) -> ApiResult<Json<CitySummary>> {
    let c = s.city(&id)?;
    Ok(Json(summary(&c)))
}

#[derive(Serialize)]
struct SceneEntry {
    scene_id: String,
    timestamp: DateTime<Utc>,
    cloud_fraction: f64,
    passes_filter: bool,
}

async fn scenes(
    State(s): State<AppState>,
    UrlPath(id): UrlPath<String>,
) -> ApiResult<Json<Vec<SceneEntry>>> {
    let c = s.city(&id)?;
    let accepted = c.ctx.scene_ids();
    Ok(Json(
        c.ctx
            .ws
            .scenes
            .iter()
            .map(|r| SceneEntry {
                scene_id: r.scene_id.clone(),
                timestamp: r.timestamp,
                cloud_fraction: r.cloud_fraction,
                passes_filter: accepted.contains(&r.scene_id),
            })
            .collect(),
    ))
}

#[derive(Deserialize)]
struct LayerQuery {
    scene: Option<String>,
    palette: Option<String>,
}

fn default_scene(c: &City, scene: Option<String>) -> ApiResult<String> {
    match scene {
        Some(s) => {
            c.ctx.ws.scene(&s)?;
            Ok(s)
        }
        None => c
            .ctx
            .scene_ids()
            .into_iter()
            .next()
            .ok_or_else(|| ApiError::new("scene_not_found", "no scene passes the scene filter")),
    }
}

async fn rendered(
    s: AppState,
    id: String,
    layer: String,
    q: LayerQuery,
) -> ApiResult<heatlab_core::pipeline::RenderedLayer> {
    let c = s.city(&id)?;
    let kind: LayerKind = layer
        .parse()
        .map_err(|_| ApiError::new("layer_not_found", format!("unknown layer `{layer}`")))?;
    let palette: Option<Palette> = q.palette.as_deref().map(str::parse).transpose()?;
    let scene = default_scene(&c, q.scene)?;
    blocking(move || Ok(render_layer(&c.ctx, kind, &scene, palette)?)).await
}

async fn layer_png(
    State(s): State<AppState>,
    UrlPath((id, layer)): UrlPath<(String, String)>,
    Query(q): Query<LayerQuery>,
) -> ApiResult<Response> {
    let r = rendered(s, id, layer, q).await?;
    Ok(([(header::CONTENT_TYPE, "image/png")], r.png).into_response())
}

async fn layer_stats(
    State(s): State<AppState>,
    UrlPath((id, layer)): UrlPath<(String, String)>,
    Query(q): Query<LayerQuery>,
) -> ApiResult<Response> {
    let r = rendered(s, id, layer, q).await?;
    Ok(Json(r.stats).into_response())
}

/// Whether a variant label can be resolved without loading it.
fn variant_exists(ctx: &CityContext, variant: &str) -> bool {
    match variant {
        TRUTH_VARIANT => true,
        BASELINE_VARIANT => ctx.root().join(BASELINE_MODEL_PATH).exists(),
        ORACLE_VARIANT => ctx.root().join(WORLD_SPEC_PATH).exists(),
        other => {
            !other.contains(['/', '\\'])
                && !other.starts_with('.')
                && ctx.ws.predictions_dir(other).is_dir()
        }
    }
}

fn require_variant(ctx: &CityContext, variant: &str) -> ApiResult<()> {
    if variant_exists(ctx, variant) {
        Ok(())
    } else {
        Err(ApiError::new(
            "variant_not_found",
            format!("unknown variant `{variant}`"),
        ))
    }
}

#[derive(Deserialize)]
struct InterventionQuery {
    scene: Option<String>,
    variant: Option<String>,
}

fn json_response(bytes: Vec<u8>) -> Response {
    ([(header::CONTENT_TYPE, "application/json")], bytes).into_response()
}

async fn post_intervention(
    State(s): State<AppState>,
    UrlPath(id): UrlPath<String>,
    Query(q): Query<InterventionQuery>,
    body: Bytes,
) -> ApiResult<Response> {
    let c = s.city(&id)?;
    let spec: InterventionSpec = serde_json::from_slice(&body).map_err(|e| {
        ApiError::bad_request("malformed intervention spec").with_detail(e.to_string())
    })?;
    spec.validate()?;
    let variant = q.variant.unwrap_or_else(|| BASELINE_VARIANT.to_string());
    require_variant(&c.ctx, &variant)?;
    let max = c.ctx.analysis().intervention.max_pixels;
    if c.ctx.ws.grid().len() > max {
        return Err(ApiError::new(
            "grid_too_large",
            format!("grid exceeds {max} pixels"),
        ));
    }
    let scene = default_scene(&c, q.scene)?;
    let bytes = blocking(move || {
        let rid = intervention_id(&scene, &variant, &spec)?;
        let path = intervention_dir(c.ctx.root(), &rid).join(INTERVENTION_RESULT_FILE);
        let _guard = c
            .writer
            .lock()
            .map_err(|e| ApiError::new("internal_error", e.to_string()))?;
        if !path.exists() {
            let predictor = load_variant(&c.ctx, &variant)?;
            let result = intervene(&c.ctx, Some(&scene), predictor.as_ref(), &spec)?;
            save_intervention(c.ctx.root(), &rid, &result)?;
        }
        std::fs::read(&path).map_err(|e| ApiError::from(heatlab_core::Error::io(&path, e)))
    })
    .await?;
    Ok(json_response(bytes))
}

async fn get_intervention(
    State(s): State<AppState>,
    UrlPath((id, rid)): UrlPath<(String, String)>,
) -> ApiResult<Response> {
    let c = s.city(&id)?;
    let not_found = || ApiError::new("intervention_not_found", format!("no intervention `{rid}`"));
    if rid.is_empty() || !rid.chars().all(|ch| ch.is_ascii_hexdigit()) {
        return Err(not_found());
    }
    let path = intervention_dir(c.ctx.root(), &rid).join(INTERVENTION_RESULT_FILE);
    match std::fs::read(&path) {
        Ok(bytes) => Ok(json_response(bytes)),
        Err(_) => Err(not_found()),
    }
}

#[derive(Deserialize)]
struct ScenarioQuery {
    rcp: Option<String>,
    year: Option<u32>,
    variant: Option<String>,
}

#[derive(Serialize)]
struct ScenarioResponse<'a> {
    report: &'a ForecastReport,
    anomaly_map: String,
}

async fn forecast_for(
    s: &AppState,
    id: &str,
    q: ScenarioQuery,
) -> ApiResult<(Arc<City>, Arc<ForecastReport>, String)> {
    let c = s.city(id)?;
    let (Some(rcp), Some(year)) = (q.rcp, q.year) else {
        return Err(ApiError::bad_request("both rcp and year are required"));
    };
    let variant = q.variant.unwrap_or_else(|| BASELINE_VARIANT.to_string());
    if variant == TRUTH_VARIANT {
        return Err(ApiError::new(
            "variant_not_found",
            "forecasts need a predictor variant",
        ));
    }
    require_variant(&c.ctx, &variant)?;
    let scenario = c.ctx.scenarios()?.find(&rcp, year)?.clone();
    let key = (scenario.rcp.clone(), year, variant.clone());
    let url =
        format!("/api/cities/{id}/scenarios/anomaly.png?rcp={rcp}&year={year}&variant={variant}");
    if let Some(r) = c.forecasts.lock().expect("forecast cache").get(&key) {
        return Ok((c.clone(), r.clone(), url));
    }
    let city = c.clone();
    let report = blocking(move || {
        let predictor = load_variant(&city.ctx, &variant)?;
        let guard = stored_guard(&city.ctx, &variant)?;
        Ok(Arc::new(forecast_city(
            &city.ctx,
            &scenario,
            predictor.as_ref(),
            guard,
        )?))
    })
    .await?;
    c.forecasts
        .lock()
        .expect("forecast cache")
        .insert(key, report.clone());
    Ok((c, report, url))
}

async fn scenarios(
    State(s): State<AppState>,
    UrlPath(id): UrlPath<String>,
    Query(q): Query<ScenarioQuery>,
) -> ApiResult<Response> {
    if q.rcp.is_none() && q.year.is_none() {
        let c = s.city(&id)?;
        return Ok(Json(c.ctx.scenarios()?).into_response());
    }
    let (_, report, anomaly_map) = forecast_for(&s, &id, q).await?;
    Ok(Json(ScenarioResponse {
        report: &report,
        anomaly_map,
    })
    .into_response())
}

async fn scenario_png(
    State(s): State<AppState>,
    UrlPath(id): UrlPath<String>,
    Query(q): Query<ScenarioQuery>,
) -> ApiResult<Response> {
    let (_, report, _) = forecast_for(&s, &id, q).await?;
    let map = report
        .anomaly_map
        .as_ref()
        .ok_or_else(|| ApiError::new("internal_error", "forecast carries no anomaly map"))?;
    let ramp = LayerKind::Anomaly.default_ramp().expect("anomaly ramp");
    let png = render_ramp(map, &ramp).encode_png()?;
    Ok(([(header::CONTENT_TYPE, "image/png")], png).into_response())
}

#[derive(Deserialize)]
struct ProfileQuery {
    kind: Option<String>,
    variant: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct VariantProfile {
    pub variant: String,
    pub profile: CoolingProfile,
    pub metrics: MetricReport,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ProfileResponse {
    pub kind: ProfileSide,
    pub truth: CoolingProfile,
    pub variants: Vec<VariantProfile>,
}

fn pending(what: &str) -> ApiError {
    ApiError::new(
        "analysis_pending",
        format!("no cooling analysis for `{what}`; run `heatlab analyze cooling`"),
    )
}

async fn profiles(
    State(s): State<AppState>,
    UrlPath(id): UrlPath<String>,
    Query(q): Query<ProfileQuery>,
) -> ApiResult<Json<ProfileResponse>> {
    let c = s.city(&id)?;
    let kind: ProfileSide = q.kind.as_deref().unwrap_or("internal").parse()?;
    let root = c.ctx.root();
    if let Some(v) = &q.variant {
        require_variant(&c.ctx, v)?;
    }
    let truth_path = cooling_report_path(root, TRUTH_VARIANT);
    if !truth_path.exists() {
        return Err(pending(TRUTH_VARIANT));
    }
    let truth: CoolingReport = read_json(&truth_path)?;
    let labels: Vec<String> = match &q.variant {
        Some(v) if v == TRUTH_VARIANT => Vec::new(),
        Some(v) => {
            if !cooling_report_path(root, v).exists() {
                return Err(pending(v));
            }
            vec![v.clone()]
        }
        None => stored_cooling_variants(root),
    };
    let mut variants = Vec::new();
    for v in labels {
        let r: CoolingReport = read_json(&cooling_report_path(root, &v))?;
        let profile = r.profile(kind).clone();
        variants.push(VariantProfile {
            metrics: compare_profiles(truth.profile(kind), &profile)?,
            variant: v,
            profile,
        });
    }
    Ok(Json(ProfileResponse {
        kind,
        truth: truth.profile(kind).clone(),
        variants,
    }))
}

fn stored_cooling_variants(root: &Path) -> Vec<String> {
    let mut v: Vec<String> = std::fs::read_dir(root.join("analysis"))
        .into_iter()
        .flatten()
        .filter_map(|e| e.ok())
        .filter_map(|e| {
            let name = e.file_name().into_string().ok()?;
            let label = name
                .strip_prefix("cooling-")?
                .strip_suffix(".json")?
                .to_string();
            (label != TRUTH_VARIANT).then_some(label)
        })
        .collect();
    v.sort();
    v
}
