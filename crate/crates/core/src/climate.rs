//! Scenario forcing of the air-temperature channel and UHI extent.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::OrderingKey;
use crate::cooling::{anomaly, builtup_baseline, BaselineSpec};
use crate::error::{Error, Result};
use crate::eval::ExtrapolationReport;
use crate::predictor::Predictor;
use crate::raster::{ensure_aligned, GeoGrid, PixelMask};
use crate::workspace::{write_json, SceneStack, AIRTEMP};

/// Additive monthly air-temperature deltas for one pathway and horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClimateScenario {
    /// Pathway label, e.g. `4.5`.
    pub rcp: String,
    pub horizon_year: u32,
    /// January to December, °C.
    pub monthly_delta: [f64; 12],
    pub source_label: String,
}

impl ClimateScenario {
    pub fn id(&self) -> String {
        format!("rcp{}-{}", self.rcp, self.horizon_year)
    }

    pub fn zero(rcp: impl Into<String>, horizon_year: u32) -> Self {
        ClimateScenario {
            rcp: rcp.into(),
            horizon_year,
            monthly_delta: [0.0; 12],
            source_label: "zero".into(),
        }
    }

    pub fn uniform(rcp: impl Into<String>, horizon_year: u32, delta: f64) -> Self {
        ClimateScenario {
            monthly_delta: [delta; 12],
            source_label: "uniform".into(),
            ..Self::zero(rcp, horizon_year)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.rcp.trim().is_empty() {
            return Err(Error::Scenario("empty rcp label".into()));
        }
        if let Some(m) = self.monthly_delta.iter().position(|d| !d.is_finite()) {
            return Err(Error::Scenario(format!(
                "{}: delta for month {} is not finite",
                self.id(),
                m + 1
            )));
        }
        Ok(())
    }

    pub fn delta_for_month(&self, month: u32) -> Result<f64> {
        (1..=12)
            .contains(&month)
            .then(|| self.monthly_delta[month as usize - 1])
            .ok_or_else(|| Error::Scenario(format!("month {month} out of range")))
    }

    /// True when every monthly delta is at least the other's.
    pub fn dominates(&self, other: &ClimateScenario) -> bool {
        self.monthly_delta
            .iter()
            .zip(&other.monthly_delta)
            .all(|(a, b)| a >= b)
    }
}

fn same_rcp(a: &str, b: &str) -> bool {
    match (a.parse::<f64>(), b.parse::<f64>()) {
        (Ok(x), Ok(y)) => x == y,
        _ => a == b,
    }
}

/// The scenario config file: a list of scenarios.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ScenarioTable {
    pub scenarios: Vec<ClimateScenario>,
}

impl ScenarioTable {
    /// Placeholder table with plausible summer-peaked deltas, ordered so a
    /// higher pathway or later horizon never has a smaller monthly delta.
    /// It is not a downscaled projection; replace it with offline-derived
    /// deltas for real studies.
    pub fn illustrative() -> Self {
        const SHAPE: [f64; 12] = [0.8, 0.8, 0.9, 1.0, 1.1, 1.3, 1.5, 1.5, 1.2, 1.0, 0.9, 0.8];
        let factors = [
            ("2.6", [(2030, 0.6), (2050, 0.8), (2100, 0.9)]),
            ("4.5", [(2030, 0.7), (2050, 1.1), (2100, 1.7)]),
            ("8.5", [(2030, 0.8), (2050, 1.5), (2100, 3.2)]),
        ];
        let scenarios = factors
            .iter()
            .flat_map(|(rcp, years)| {
                years.iter().map(move |&(year, f)| ClimateScenario {
                    rcp: rcp.to_string(),
                    horizon_year: year,
                    monthly_delta: SHAPE.map(|s| (s * f * 100.0).round() / 100.0),
                    source_label: "illustrative delta table".into(),
                })
            })
            .collect();
        ScenarioTable { scenarios }
    }

    pub fn validate(&self) -> Result<()> {
        for (i, s) in self.scenarios.iter().enumerate() {
            s.validate()?;
            if self.scenarios[..i]
                .iter()
                .any(|o| same_rcp(&o.rcp, &s.rcp) && o.horizon_year == s.horizon_year)
            {
                return Err(Error::Scenario(format!("duplicate scenario {}", s.id())));
            }
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let t: ScenarioTable = serde_json::from_str(&text).map_err(|e| Error::Sidecar {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        t.validate()?;
        Ok(t)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }

    pub fn find(&self, rcp: &str, horizon_year: u32) -> Result<&ClimateScenario> {
        self.scenarios
            .iter()
            .find(|s| same_rcp(&s.rcp, rcp) && s.horizon_year == horizon_year)
            .ok_or_else(|| Error::Scenario(format!("no scenario for rcp {rcp} / {horizon_year}")))
    }
}

/// Adds the scenario delta for the scene's month to the air-temperature
/// channel. Every other channel is left untouched.
pub fn apply_forcing(stack: &SceneStack, scenario: &ClimateScenario) -> Result<SceneStack> {
    scenario.validate()?;
    let delta = scenario.delta_for_month(stack.month())?;
    let air = stack.channel(AIRTEMP)?;
    let forced = air.map(|v| Some((v as f64 + delta) as f32))?;
    let mut out = stack.clone();
    out.replace_channel(AIRTEMP, forced)?;
    out.provenance
        .push(format!("forcing {} {:+}", scenario.id(), delta));
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UhiExtentReport {
    pub threshold: f64,
    pub exceed_area_km2: f64,
    pub exceed_fraction: f64,
    pub mean_urban_anomaly: f64,
    pub urban_pixels: usize,
    pub exceed_pixels: usize,
}

/// Share of urban pixels whose anomaly exceeds `threshold`. Urban pixels
/// without a valid anomaly are left out of both counts.
pub fn uhi_extent(dt: &GeoGrid, urban: &PixelMask, threshold: f64) -> Result<UhiExtentReport> {
    ensure_aligned(dt, urban)?;
    let (mut n, mut k, mut sum) = (0usize, 0usize, 0.0f64);
    for (i, v) in dt.iter().enumerate() {
        if let (true, Some(v)) = (urban.at(i), v) {
            n += 1;
            sum += v as f64;
            if v as f64 > threshold {
                k += 1;
            }
        }
    }
    if n == 0 {
        return Err(Error::DegenerateMask(
            "urban mask has no pixel with a valid anomaly".into(),
        ));
    }
    Ok(UhiExtentReport {
        threshold,
        exceed_area_km2: k as f64 * dt.spec().pixel_area() / 1e6,
        exceed_fraction: k as f64 / n as f64,
        mean_urban_anomaly: sum / n as f64,
        urban_pixels: n,
        exceed_pixels: k,
    })
}

/// Upper bound on the ordering key within which a predictor was validated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtrapolationGuard {
    pub ordering_key: OrderingKey,
    pub limit: f64,
}

impl ExtrapolationGuard {
    /// Training maximum plus the accepted margin (zero when nothing was
    /// accepted beyond it).
    pub fn from_report(report: &ExtrapolationReport, ordering_key: OrderingKey) -> Self {
        ExtrapolationGuard {
            ordering_key,
            limit: report.train_max_key + report.margin.unwrap_or(0.0).max(0.0),
        }
    }
}

/// Inputs shared by every scene of a forecast.
#[derive(Debug, Clone)]
pub struct ForecastSettings {
    pub built: PixelMask,
    /// Distance to the nearest park; all nodata when there are no parks,
    /// which makes the baseline fall back to the citywide built mean.
    pub park_outside: GeoGrid,
    pub baseline: BaselineSpec,
    pub threshold: f64,
    pub guard: Option<ExtrapolationGuard>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastSceneRow {
    pub scene_id: String,
    pub month: u32,
    pub delta: f64,
    pub present_baseline: f64,
    pub mean_anomaly: f64,
    pub key: f64,
    pub out_of_validated_range: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastReport {
    pub scenario: ClimateScenario,
    pub variant: String,
    pub extent: UhiExtentReport,
    pub scenes: Vec<ForecastSceneRow>,
    pub validated_limit: Option<f64>,
    pub out_of_validated_range: bool,
    #[serde(skip)]
    pub anomaly_map: Option<GeoGrid>,
}

struct SceneOutcome {
    row: ForecastSceneRow,
    anomaly: GeoGrid,
}

fn forecast_scene(
    stack: &SceneStack,
    scenario: &ClimateScenario,
    predictor: &dyn Predictor,
    s: &ForecastSettings,
) -> Result<SceneOutcome> {
    let present = predictor.predict(stack)?;
    let baseline = builtup_baseline(&present, &s.built, &s.park_outside, &s.baseline)?;
    let forced_stack = apply_forcing(stack, scenario)?;
    let forced = predictor.predict(&forced_stack)?;
    let dt = anomaly(&forced, baseline)?;
    let key = match s.guard.map(|g| g.ordering_key).unwrap_or_default() {
        OrderingKey::MeanLst => forced.stats(),
        OrderingKey::MeanAirTemp => forced_stack.channel(AIRTEMP)?.stats(),
    }
    .map(|st| st.mean)
    .ok_or_else(|| Error::Scenario(format!("scene {} has no valid prediction", stack.scene_id)))?;
    let mean_anomaly = dt.stats().map_or(f64::NAN, |st| st.mean);
    Ok(SceneOutcome {
        row: ForecastSceneRow {
            scene_id: stack.scene_id.clone(),
            month: stack.month(),
            delta: scenario.delta_for_month(stack.month())?,
            present_baseline: baseline,
            mean_anomaly,
            key,
            out_of_validated_range: s.guard.is_some_and(|g| key > g.limit),
        },
        anomaly: dt,
    })
}

/// Per-pixel mean over grids, skipping nodata; nodata where no grid has a value.
pub fn mean_map(grids: &[GeoGrid]) -> Result<GeoGrid> {
    let first = grids
        .first()
        .ok_or_else(|| Error::InvalidParameter("no grids to average".into()))?;
    for g in grids {
        ensure_aligned(first, g)?;
    }
    let values: Vec<Option<f32>> = (0..first.spec().len())
        .map(|i| {
            let (s, n) = grids
                .iter()
                .filter_map(|g| g.at(i))
                .fold((0.0f64, 0usize), |(s, n), v| (s + v as f64, n + 1));
            (n > 0).then(|| (s / n as f64) as f32)
        })
        .collect();
    GeoGrid::from_options(*first.spec(), first.nodata(), &values)
}

/// Forces every stack, predicts, takes anomalies against the present-day
/// built-up baseline and reports the extent of the mean anomaly map.
/// Scenes run in parallel; aggregation follows input order.
pub fn forecast(
    stacks: &[SceneStack],
    scenario: &ClimateScenario,
    predictor: &dyn Predictor,
    settings: &ForecastSettings,
) -> Result<ForecastReport> {
    if stacks.is_empty() {
        return Err(Error::Scenario("no scenes pass the filters".into()));
    }
    scenario.validate()?;
    let outcomes: Vec<SceneOutcome> = stacks
        .par_iter()
        .map(|s| forecast_scene(s, scenario, predictor, settings))
        .collect::<Result<_>>()?;
    let (rows, maps): (Vec<_>, Vec<_>) = outcomes.into_iter().map(|o| (o.row, o.anomaly)).unzip();
    let map = mean_map(&maps)?.with_band("anomaly");
    let extent = uhi_extent(&map, &settings.built, settings.threshold)?;
    Ok(ForecastReport {
        scenario: scenario.clone(),
        variant: predictor.identity().to_string(),
        extent,
        out_of_validated_range: rows.iter().any(|r| r.out_of_validated_range),
        validated_limit: settings.guard.map(|g| g.limit),
        scenes: rows,
        anomaly_map: Some(map),
    })
}
