//! Analysis parameters stored in `workspace.json`. Every field has a default,
//! so a workspace file only needs to list what it overrides.

use serde::{Deserialize, Serialize};

use crate::cooling::{BaselineSpec, ProfileBins};
use crate::error::{Error, Result};
use crate::landcover::LulcCategory;
use crate::predictor::AlbedoWeights;
use crate::spectral::{EmissivityParams, SplitWindowCoefficients};

/// Scene selection: months and local hours of acquisition, cloud screening.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneFilter {
    pub months: Vec<u32>,
    /// Local hour interval `[hour_start, hour_end)`.
    pub hour_start: f64,
    pub hour_end: f64,
    /// Inclusive upper bound on the scene cloud fraction.
    pub max_cloud: f64,
}

impl Default for SceneFilter {
    fn default() -> Self {
        SceneFilter {
            months: vec![6, 7, 8],
            hour_start: 9.0,
            hour_end: 16.0,
            max_cloud: 0.3,
        }
    }
}

/// The per-sample key a high-heat split orders by.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrderingKey {
    /// Scene mean of the ground-truth LST.
    #[default]
    MeanLst,
    /// Scene mean of the air-temperature channel.
    MeanAirTemp,
}

impl OrderingKey {
    pub fn name(self) -> &'static str {
        match self {
            OrderingKey::MeanLst => "mean_lst",
            OrderingKey::MeanAirTemp => "mean_air_temp",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitConfig {
    pub fractions: [f64; 3],
    pub high_heat_q: f64,
    pub train_val_ratio: f64,
    pub ordering_key: OrderingKey,
    /// Largest absolute error for a test prediction to count as a success.
    pub success_tolerance: f64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            fractions: [0.72, 0.18, 0.10],
            high_heat_q: 0.9,
            train_val_ratio: 0.8,
            ordering_key: OrderingKey::MeanLst,
            success_tolerance: 2.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DonorStatistic {
    #[default]
    Median,
    Mean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InterventionDefaults {
    pub target: LulcCategory,
    pub statistic: DonorStatistic,
    pub min_donor_pixels: usize,
    /// Default jitter as a multiple of the donor standard deviation.
    pub jitter_scale: f64,
    /// Largest grid (pixels) the service evaluates synchronously.
    pub max_pixels: usize,
}

impl Default for InterventionDefaults {
    fn default() -> Self {
        InterventionDefaults {
            target: LulcCategory::Trees,
            statistic: DonorStatistic::Median,
            min_donor_pixels: 100,
            jitter_scale: 0.5,
            max_pixels: 1024 * 1024,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnalysisConfig {
    pub seed: u64,
    pub scene_filter: SceneFilter,
    pub green_categories: Vec<LulcCategory>,
    pub built_categories: Vec<LulcCategory>,
    pub min_park_area_m2: f64,
    pub baseline: BaselineSpec,
    pub profile_bins: ProfileBins,
    /// Side of the square window for built fraction, in pixels.
    pub built_fraction_window: usize,
    /// Pixels at or below this built fraction form the rural reference.
    pub rural_max_built_fraction: f64,
    pub radial_bin_width: f64,
    pub source_sink_quantiles: (f64, f64),
    pub emissivity_i: EmissivityParams,
    pub emissivity_j: EmissivityParams,
    pub split_window: SplitWindowCoefficients,
    pub albedo: AlbedoWeights,
    pub split: SplitConfig,
    pub uhi_threshold: f64,
    pub intervention: InterventionDefaults,
    /// Scenario table, relative to the workspace root.
    pub scenarios_path: String,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            seed: 42,
            scene_filter: SceneFilter::default(),
            green_categories: vec![LulcCategory::Trees],
            built_categories: vec![LulcCategory::Built],
            min_park_area_m2: 10_000.0,
            baseline: BaselineSpec::default(),
            profile_bins: ProfileBins::default(),
            built_fraction_window: 11,
            rural_max_built_fraction: 0.05,
            radial_bin_width: 300.0,
            source_sink_quantiles: (0.25, 0.75),
            emissivity_i: EmissivityParams::default(),
            emissivity_j: EmissivityParams::default(),
            split_window: SplitWindowCoefficients::mean_brightness(),
            albedo: AlbedoWeights::default(),
            split: SplitConfig::default(),
            uhi_threshold: 2.0,
            intervention: InterventionDefaults::default(),
            scenarios_path: "scenarios.json".into(),
        }
    }
}

impl AnalysisConfig {
    pub fn validate(&self) -> Result<()> {
        self.baseline.validate()?;
        self.emissivity_i.validate()?;
        self.emissivity_j.validate()?;
        self.split_window.validate()?;
        if self.green_categories.is_empty() || self.built_categories.is_empty() {
            return Err(Error::InvalidParameter(
                "green and built category lists must be non-empty".into(),
            ));
        }
        if self.profile_bins.bin_width <= 0.0 {
            return Err(Error::InvalidParameter(
                "profile bin width must be positive".into(),
            ));
        }
        if self.built_fraction_window.is_multiple_of(2) {
            return Err(Error::InvalidParameter(
                "built fraction window must be odd".into(),
            ));
        }
        let f = &self.scene_filter;
        if !(0.0..=1.0).contains(&f.max_cloud) || f.hour_start >= f.hour_end {
            return Err(Error::InvalidParameter(
                "scene filter bounds are inconsistent".into(),
            ));
        }
        Ok(())
    }
}
