use std::path::Path;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use heatlab_core::climate::{
    mean_map, uhi_extent, ClimateScenario, ScenarioTable, UhiExtentReport,
};
use heatlab_core::cooling::{anomaly, builtup_baseline};
use heatlab_core::pipeline::{
    cooling_analysis, cooling_report_path, fit_baseline_scenes, write_report, CityContext,
    BASELINE_MODEL_PATH,
};
use heatlab_core::predictor::{
    generate_synthetic_city, write_synthetic_workspace, OraclePredictor, Predictor,
    SyntheticWorldSpec,
};
use heatlab_core::raster::GridSpec;
use heatlab_service::{router, AppState, ProfileResponse, ERROR_CATALOG};
use http_body_util::BodyExt;
use serde_json::Value;
use tower::ServiceExt;

fn world_spec() -> SyntheticWorldSpec {
    SyntheticWorldSpec {
        city_id: "testville".into(),
        size: 200,
        park_count: 3,
        park_side_min: 12,
        park_side_max: 16,
        park_gap: 10,
        lake_radius: 8,
        scene_count: 4,
        ..Default::default()
    }
}

/// Synthetic workspace under `root/testville` with a fitted baseline and an
/// extra zero-delta scenario.
fn build_city(root: &Path) -> std::path::PathBuf {
    let dir = root.join("testville");
    let world = generate_synthetic_city(&world_spec()).unwrap();
    write_synthetic_workspace(&dir, &world).unwrap();
    let mut table = ScenarioTable::illustrative();
    table.scenarios.push(ClimateScenario::zero("0", 2020));
    table.write(&dir.join("scenarios.json")).unwrap();
    let ctx = CityContext::open(&dir).unwrap();
    let model = fit_baseline_scenes(&ctx, None).unwrap();
    write_report(&dir.join(BASELINE_MODEL_PATH), &model).unwrap();
    dir
}

struct Fixture {
    _tmp: tempfile::TempDir,
    dir: std::path::PathBuf,
    app: axum::Router,
}

fn fixture() -> Fixture {
    let tmp = tempfile::tempdir().unwrap();
    let dir = build_city(tmp.path());
    let app = router(AppState::discover(tmp.path()).unwrap());
    Fixture {
        _tmp: tmp,
        dir,
        app,
    }
}

async fn call(
    app: &axum::Router,
    method: &str,
    uri: &str,
    body: Option<&str>,
) -> (StatusCode, Vec<u8>) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(body.map_or_else(Body::empty, |b| Body::from(b.to_string())))
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    (
        status,
        resp.into_body()
            .collect()
            .await
            .unwrap()
            .to_bytes()
            .to_vec(),
    )
}

async fn get_json(app: &axum::Router, uri: &str) -> (StatusCode, Value) {
    let (s, b) = call(app, "GET", uri, None).await;
    (s, serde_json::from_slice(&b).unwrap_or(Value::Null))
}

fn error_code(v: &Value) -> &str {
    let code = v["code"].as_str().expect("error body carries a code");
    assert!(
        ERROR_CATALOG.iter().any(|(c, _, _)| *c == code),
        "uncatalogued {code}"
    );
    assert!(v["message"].is_string());
    code
}

fn pixel_rect(grid: &GridSpec, c0: usize, c1: usize, r0: usize, r1: usize) -> String {
    let x0 = grid.origin_x + c0 as f64 * grid.pixel_size;
    let x1 = grid.origin_x + c1 as f64 * grid.pixel_size;
    let y0 = grid.origin_y - r0 as f64 * grid.pixel_size;
    let y1 = grid.origin_y - r1 as f64 * grid.pixel_size;
    serde_json::json!({ "polygon": [[x0, y0], [x1, y0], [x1, y1], [x0, y1]], "seed": 7 })
        .to_string()
}

#[tokio::test]
async fn version_publishes_a_unique_catalog() {
    let app = router(AppState::default());
    let (s, v) = get_json(&app, "/api/version").await;
    assert_eq!(s, StatusCode::OK);
    let codes: Vec<&str> = v["errors"]
        .as_array()
        .unwrap()
        .iter()
        .map(|e| e["code"].as_str().unwrap())
        .collect();
    let mut dedup = codes.clone();
    dedup.sort();
    dedup.dedup();
    assert_eq!(dedup.len(), codes.len());
    assert_eq!(codes.len(), ERROR_CATALOG.len());
}

#[tokio::test]
async fn zero_workspaces_list_empty() {
    let tmp = tempfile::tempdir().unwrap();
    let app = router(AppState::discover(tmp.path()).unwrap());
    let (s, v) = get_json(&app, "/api/cities").await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v, Value::Array(vec![]));
    let (s, v) = get_json(&app, "/api/cities/nowhere").await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert_eq!(error_code(&v), "city_not_found");
}

#[tokio::test]
async fn one_workspace_lists_its_metadata() {
    let f = fixture();
    let (s, v) = get_json(&f.app, "/api/cities").await;
    assert_eq!(s, StatusCode::OK);
    let list = v.as_array().unwrap();
    assert_eq!(list.len(), 1);
    let city = &list[0];
    assert_eq!(city["city_id"], "testville");
    assert_eq!(city["scene_count"], 4);
    assert_eq!(city["grid"]["width"], 200);
    assert!(city["date_range"].as_array().unwrap().len() == 2);
    let (_, scenes) = get_json(&f.app, "/api/cities/testville/scenes").await;
    assert_eq!(scenes.as_array().unwrap().len(), 4);
}

#[tokio::test]
async fn layers_render_and_errors_are_catalogued() {
    let f = fixture();
    for layer in ["rgb", "ndvi", "lulc", "lst", "anomaly"] {
        let (s, png) = call(
            &f.app,
            "GET",
            &format!("/api/cities/testville/layers/{layer}"),
            None,
        )
        .await;
        assert_eq!(s, StatusCode::OK, "{layer}");
        let decoder = png::Decoder::new(std::io::Cursor::new(&png));
        let reader = decoder.read_info().unwrap();
        assert_eq!((reader.info().width, reader.info().height), (200, 200));
        let (_, again) = call(
            &f.app,
            "GET",
            &format!("/api/cities/testville/layers/{layer}"),
            None,
        )
        .await;
        assert_eq!(png, again, "{layer} render is not repeatable");
    }
    let (s, stats) = get_json(
        &f.app,
        "/api/cities/testville/layers/lst/stats?palette=gray",
    )
    .await;
    assert_eq!(s, StatusCode::OK);
    let (lo, mean, hi) = (
        stats["min"].as_f64().unwrap(),
        stats["mean"].as_f64().unwrap(),
        stats["max"].as_f64().unwrap(),
    );
    assert!(lo <= mean && mean <= hi);
    assert_eq!(stats["ramp"]["palette"], "gray");

    let (s, v) = get_json(
        &f.app,
        "/api/cities/testville/layers/lst?scene=S19990101T0000",
    )
    .await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert_eq!(error_code(&v), "scene_not_found");
    let (s, v) = get_json(&f.app, "/api/cities/testville/layers/albedo").await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert_eq!(error_code(&v), "layer_not_found");
    let (s, v) = get_json(&f.app, "/api/cities/testville/layers/lst?palette=neon").await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(error_code(&v), "bad_request");
}

#[tokio::test]
async fn profiles_pending_then_oracle_closes() {
    let f = fixture();
    let (s, v) = get_json(&f.app, "/api/cities/testville/profiles?kind=internal").await;
    assert_eq!(s, StatusCode::CONFLICT);
    assert_eq!(error_code(&v), "analysis_pending");

    let ctx = CityContext::open(&f.dir).unwrap();
    let truth = cooling_analysis(&ctx, None).unwrap();
    write_report(&cooling_report_path(&f.dir, "truth"), &truth).unwrap();
    let oracle = OraclePredictor::from_world(
        &generate_synthetic_city(&world_spec()).unwrap(),
        ctx.analysis().min_park_area_m2,
    );
    let pred = cooling_analysis(&ctx, Some(&oracle as &dyn Predictor)).unwrap();
    write_report(&cooling_report_path(&f.dir, "oracle"), &pred).unwrap();

    for kind in ["internal", "spillover"] {
        let (s, b) = call(
            &f.app,
            "GET",
            &format!("/api/cities/testville/profiles?kind={kind}&variant=oracle"),
            None,
        )
        .await;
        assert_eq!(s, StatusCode::OK);
        let r: ProfileResponse = serde_json::from_slice(&b).unwrap();
        assert_eq!(r.variants.len(), 1);
        let m = &r.variants[0].metrics;
        assert!(
            m.mae <= 0.05 && m.rmse <= 0.05 && m.mbe.abs() <= 0.05,
            "{kind}: {m:?}"
        );
    }
    let (s, v) = get_json(&f.app, "/api/cities/testville/profiles?variant=V9").await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert_eq!(error_code(&v), "variant_not_found");
    let (s, v) = get_json(&f.app, "/api/cities/testville/profiles?variant=baseline").await;
    assert_eq!(s, StatusCode::CONFLICT);
    assert_eq!(error_code(&v), "analysis_pending");
    let (s, v) = get_json(&f.app, "/api/cities/testville/profiles?kind=sideways").await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(error_code(&v), "bad_request");
}

#[tokio::test]
async fn zero_delta_scenario_equals_present_day() {
    let f = fixture();
    let (s, v) = get_json(&f.app, "/api/cities/testville/scenarios?rcp=0&year=2020").await;
    assert_eq!(s, StatusCode::OK, "{v}");
    let extent: UhiExtentReport = serde_json::from_value(v["report"]["extent"].clone()).unwrap();

    // present-day anomaly assembled by hand from the same predictor
    let ctx = CityContext::open(&f.dir).unwrap();
    let model = heatlab_core::pipeline::load_variant(&ctx, "baseline").unwrap();
    let maps: Vec<_> = ctx
        .scene_ids()
        .iter()
        .map(|id| {
            let lst = model.predict(&ctx.stack(id).unwrap()).unwrap();
            let b = builtup_baseline(
                &lst,
                &ctx.built,
                &ctx.park_outside().unwrap(),
                &ctx.analysis().baseline,
            )
            .unwrap();
            anomaly(&lst, b).unwrap()
        })
        .collect();
    let present = uhi_extent(
        &mean_map(&maps).unwrap(),
        &ctx.built,
        ctx.analysis().uhi_threshold,
    )
    .unwrap();
    assert_eq!(extent, present);

    let (s, png) = call(&f.app, "GET", v["anomaly_map"].as_str().unwrap(), None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(&png[1..4], b"PNG");
}

#[tokio::test]
async fn scenario_monotone_and_unknown() {
    let f = fixture();
    let (_, low) = get_json(
        &f.app,
        "/api/cities/testville/scenarios?rcp=2.6&year=2030&variant=baseline",
    )
    .await;
    let (_, high) = get_json(
        &f.app,
        "/api/cities/testville/scenarios?rcp=8.5&year=2100&variant=baseline",
    )
    .await;
    let fl = low["report"]["extent"]["exceed_fraction"].as_f64().unwrap();
    let fh = high["report"]["extent"]["exceed_fraction"]
        .as_f64()
        .unwrap();
    assert!(fh >= fl, "{fh} < {fl}");
    let (s, v) = get_json(&f.app, "/api/cities/testville/scenarios?rcp=6.0&year=2050").await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert_eq!(error_code(&v), "scenario_not_found");
    let (s, list) = get_json(&f.app, "/api/cities/testville/scenarios").await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(list["scenarios"].as_array().unwrap().len(), 10);
}

#[tokio::test]
async fn interventions_cool_persist_and_deduplicate() {
    let f = fixture();
    let grid = *CityContext::open(&f.dir).unwrap().ws.grid();
    let body = pixel_rect(&grid, 95, 105, 95, 105);
    let uri = "/api/cities/testville/interventions?variant=oracle";
    let (s, first) = call(&f.app, "POST", uri, Some(&body)).await;
    assert_eq!(s, StatusCode::OK, "{}", String::from_utf8_lossy(&first));
    let v: Value = serde_json::from_slice(&first).unwrap();
    assert!(v["mean_delta_in_mask"].as_f64().unwrap() < 0.0);
    assert_eq!(v["edited_pixels"], 100);
    assert!(v["transect"].as_array().unwrap().len() > 10);
    let id = v["id"].as_str().unwrap();
    assert!(f
        .dir
        .join("interventions")
        .join(id)
        .join("delta.grid")
        .exists());

    let (_, second) = call(&f.app, "POST", uri, Some(&body)).await;
    assert_eq!(first, second);
    let (s, stored) = call(
        &f.app,
        "GET",
        &format!("/api/cities/testville/interventions/{id}"),
        None,
    )
    .await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(first, stored);

    let (s, v) = get_json(&f.app, "/api/cities/testville/interventions/0123abcd").await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert_eq!(error_code(&v), "intervention_not_found");
}

#[tokio::test]
async fn intervention_errors() {
    let f = fixture();
    let grid = *CityContext::open(&f.dir).unwrap().ws.grid();
    let uri = "/api/cities/testville/interventions";
    // the lake sits outside the city at 45 degrees
    let (s, b) = call(
        &f.app,
        "POST",
        uri,
        Some(&pixel_rect(&grid, 180, 186, 180, 186)),
    )
    .await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(
        error_code(&serde_json::from_slice(&b).unwrap()),
        "mask_not_built"
    );

    let two = r#"{"polygon": [[503000, 4997000], [503300, 4997000]]}"#;
    let (s, b) = call(&f.app, "POST", uri, Some(two)).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(
        error_code(&serde_json::from_slice(&b).unwrap()),
        "invalid_polygon"
    );

    let (s, b) = call(&f.app, "POST", uri, Some("{not json")).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(
        error_code(&serde_json::from_slice(&b).unwrap()),
        "bad_request"
    );

    let (s, b) = call(
        &f.app,
        "POST",
        &format!("{uri}?variant=V7"),
        Some(&pixel_rect(&grid, 95, 105, 95, 105)),
    )
    .await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert_eq!(
        error_code(&serde_json::from_slice(&b).unwrap()),
        "variant_not_found"
    );
}
