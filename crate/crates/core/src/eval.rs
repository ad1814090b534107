//! Error metrics, train/validation/test splits and extrapolation accounting.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cooling::CoolingProfile;
use crate::error::{Error, Result};
use crate::raster::{ensure_aligned, GeoGrid};
use crate::stats::nearest_rank;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub mae: f64,
    pub mse: f64,
    pub rmse: f64,
    pub mbe: f64,
    pub n: usize,
}

/// Errors are `pred - truth`.
pub fn metrics(pred: &[f64], truth: &[f64]) -> Result<MetricReport> {
    if pred.len() != truth.len() {
        return Err(Error::Metrics(format!(
            "length mismatch: {} predictions vs {} truths",
            pred.len(),
            truth.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::Metrics("no usable pairs".into()));
    }
    let n = pred.len() as f64;
    let (mut abs, mut sq, mut bias) = (0.0, 0.0, 0.0);
    for (p, t) in pred.iter().zip(truth) {
        let e = p - t;
        abs += e.abs();
        sq += e * e;
        bias += e;
    }
    let mse = sq / n;
    Ok(MetricReport {
        mae: abs / n,
        mse,
        rmse: mse.sqrt(),
        mbe: bias / n,
        n: pred.len(),
    })
}

/// Metrics over pixels valid in both grids.
pub fn grid_metrics(pred: &GeoGrid, truth: &GeoGrid) -> Result<MetricReport> {
    ensure_aligned(pred, truth)?;
    let (p, t): (Vec<f64>, Vec<f64>) = pred
        .iter()
        .zip(truth.iter())
        .filter_map(|(p, t)| Some((p? as f64, t? as f64)))
        .unzip();
    metrics(&p, &t)
}

/// Metrics over the bin means populated in both profiles.
pub fn compare_profiles(truth: &CoolingProfile, pred: &CoolingProfile) -> Result<MetricReport> {
    if !truth.same_bins(pred) {
        return Err(Error::BinMismatch);
    }
    let (p, t): (Vec<f64>, Vec<f64>) = pred
        .mean_dt
        .iter()
        .zip(&truth.mean_dt)
        .filter_map(|(p, t)| Some(((*p)?, (*t)?)))
        .unzip();
    if p.is_empty() {
        return Err(Error::Metrics("profiles share no populated bin".into()));
    }
    metrics(&p, &t)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitStrategy {
    Random,
    HighHeat,
}

impl std::str::FromStr for SplitStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(SplitStrategy::Random),
            "high-heat" | "high_heat" => Ok(SplitStrategy::HighHeat),
            _ => Err(Error::InvalidParameter(format!(
                "unknown split strategy `{s}`"
            ))),
        }
    }
}

/// A partition of sample indices `0..n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub strategy: SplitStrategy,
    pub seed: u64,
    pub ordering_key: String,
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
    /// Key threshold of a high-heat split; test keys lie strictly above it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

impl SplitPlan {
    pub fn len(&self) -> usize {
        self.train.len() + self.val.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn sizes(&self) -> (usize, usize, usize) {
        (self.train.len(), self.val.len(), self.test.len())
    }

    /// True iff the three parts are disjoint and cover `0..n` exactly.
    pub fn is_partition_of(&self, n: usize) -> bool {
        let mut seen = vec![false; n];
        for &i in self.train.iter().chain(&self.val).chain(&self.test) {
            if i >= n || seen[i] {
                return false;
            }
            seen[i] = true;
        }
        seen.into_iter().all(|s| s)
    }

    pub fn train_val(&self) -> impl Iterator<Item = usize> + '_ {
        self.train.iter().chain(&self.val).copied()
    }
}

/// Integer part sizes for `fracs` of `n` by largest remainder; ties go to
/// the earlier part.
pub fn largest_remainder(n: usize, fracs: &[f64]) -> Vec<usize> {
    let total: f64 = fracs.iter().sum();
    let quotas: Vec<f64> = fracs.iter().map(|f| f / total * n as f64).collect();
    let mut sizes: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let mut order: Vec<usize> = (0..fracs.len()).collect();
    // stable sort keeps the earlier part first on equal remainders
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.total_cmp(&ra)
    });
    let short = n - sizes.iter().sum::<usize>();
    for &k in order.iter().take(short) {
        sizes[k] += 1;
    }
    sizes
}

fn shuffled(indices: &mut [usize], seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    indices.shuffle(&mut rng);
}

pub const MIN_SPLIT_SAMPLES: usize = 10;

/// Seeded shuffle of `0..n`, sliced into train/val/test by `fracs`.
pub fn split_random(n: usize, fracs: [f64; 3], seed: u64) -> Result<SplitPlan> {
    if n < MIN_SPLIT_SAMPLES {
        return Err(Error::Split(format!(
            "need at least {MIN_SPLIT_SAMPLES} samples, got {n}"
        )));
    }
    if fracs.iter().any(|f| !(*f > 0.0 && f.is_finite())) {
        return Err(Error::Split(format!(
            "fractions {fracs:?} must be positive"
        )));
    }
    let sizes = largest_remainder(n, &fracs);
    if sizes.contains(&0) {
        return Err(Error::Split(format!(
            "{n} samples leave an empty part: {sizes:?}"
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    shuffled(&mut idx, seed);
    let (train, rest) = idx.split_at(sizes[0]);
    let (val, test) = rest.split_at(sizes[1]);
    let sorted = |s: &[usize]| {
        let mut v = s.to_vec();
        v.sort_unstable();
        v
    };
    Ok(SplitPlan {
        strategy: SplitStrategy::Random,
        seed,
        ordering_key: "none".into(),
        train: sorted(train),
        val: sorted(val),
        test: sorted(test),
        threshold: None,
        warning: None,
    })
}

/// Withholds samples whose key exceeds the nearest-rank `q`-quantile; the
/// rest is shuffled and split train/val by `train_val_ratio`.
pub fn split_high_heat(
    keys: &[f64],
    ordering_key: &str,
    q: f64,
    train_val_ratio: f64,
    seed: u64,
) -> Result<SplitPlan> {
    let n = keys.len();
    if n < MIN_SPLIT_SAMPLES {
        return Err(Error::Split(format!(
            "need at least {MIN_SPLIT_SAMPLES} samples, got {n}"
        )));
    }
    if let Some(i) = keys.iter().position(|k| !k.is_finite()) {
        return Err(Error::Split(format!("key {i} is not finite")));
    }
    if !(0.0..=1.0).contains(&q) || !(train_val_ratio > 0.0 && train_val_ratio < 1.0) {
        return Err(Error::Split(format!(
            "bad q {q} or train/val ratio {train_val_ratio}"
        )));
    }
    let mut sorted = keys.to_vec();
    sorted.sort_by(f64::total_cmp);
    let threshold = nearest_rank(&sorted, q);
    let test: Vec<usize> = (0..n).filter(|&i| keys[i] > threshold).collect();
    let mut rest: Vec<usize> = (0..n).filter(|&i| keys[i] <= threshold).collect();
    let sizes = largest_remainder(rest.len(), &[train_val_ratio, 1.0 - train_val_ratio]);
    shuffled(&mut rest, seed);
    let (train, val) = rest.split_at(sizes[0]);
    let mut train = train.to_vec();
    let mut val = val.to_vec();
    train.sort_unstable();
    val.sort_unstable();
    let warning = test
        .is_empty()
        .then(|| format!("no key exceeds the {q} quantile {threshold}; the test set is empty"));
    Ok(SplitPlan {
        strategy: SplitStrategy::HighHeat,
        seed,
        ordering_key: ordering_key.into(),
        train,
        val,
        test,
        threshold: Some(threshold),
        warning,
    })
}

/// Accepted predicted maximum beyond the training range.
pub fn extrapolation_margin(predicted_max: f64, train_max_key: f64) -> f64 {
    predicted_max - train_max_key
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtrapolationReport {
    pub train_max_key: f64,
    pub test_key_range: (f64, f64),
    pub success_tolerance: f64,
    /// Test samples whose absolute error is within the tolerance.
    pub accepted: usize,
    /// Largest accepted prediction; `None` if nothing was accepted.
    pub predicted_max: Option<f64>,
    pub margin: Option<f64>,
    /// True when an accepted prediction lies above the training maximum.
    pub extrapolates: bool,
    pub metrics: MetricReport,
}

/// Test-set metrics and the validated margin beyond the train/val key range.
pub fn extrapolation_report(
    plan: &SplitPlan,
    keys: &[f64],
    pred: &[f64],
    truth: &[f64],
    success_tolerance: f64,
) -> Result<ExtrapolationReport> {
    let n = keys.len();
    if pred.len() != n || truth.len() != n {
        return Err(Error::Metrics(format!(
            "{n} keys but {} predictions and {} truths",
            pred.len(),
            truth.len()
        )));
    }
    if !plan.is_partition_of(n) {
        return Err(Error::Split(format!("plan does not partition {n} samples")));
    }
    if plan.test.is_empty() {
        return Err(Error::Split("test set is empty".into()));
    }
    let train_max_key = plan
        .train_val()
        .map(|i| keys[i])
        .fold(f64::NEG_INFINITY, f64::max);
    let test_keys = plan.test.iter().map(|&i| keys[i]);
    let test_key_range = (
        test_keys.clone().fold(f64::INFINITY, f64::min),
        test_keys.fold(f64::NEG_INFINITY, f64::max),
    );
    let tp: Vec<f64> = plan.test.iter().map(|&i| pred[i]).collect();
    let tt: Vec<f64> = plan.test.iter().map(|&i| truth[i]).collect();
    let metrics = metrics(&tp, &tt)?;
    let accepted: Vec<f64> = tp
        .iter()
        .zip(&tt)
        .filter(|(p, t)| (*p - *t).abs() <= success_tolerance)
        .map(|(p, _)| *p)
        .collect();
    let predicted_max = accepted.iter().copied().reduce(f64::max);
    let margin = predicted_max.map(|m| extrapolation_margin(m, train_max_key));
    Ok(ExtrapolationReport {
        train_max_key,
        test_key_range,
        success_tolerance,
        accepted: accepted.len(),
        predicted_max,
        margin,
        extrapolates: margin.is_some_and(|m| m > 0.0),
        metrics,
    })
}
