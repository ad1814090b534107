use serde::{Deserialize, Serialize};

use super::Predictor;
use crate::error::{Error, Result};
use crate::raster::{ensure_aligned, GeoGrid};
use crate::workspace::{SceneStack, AIRTEMP};

/// Broadband albedo as a weighted sum of reflectance bands plus an offset.
/// Defaults follow Liang's shortwave narrow-to-broadband conversion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AlbedoWeights {
    pub blue: f64,
    pub red: f64,
    pub nir: f64,
    pub swir1: f64,
    pub swir2: f64,
    pub offset: f64,
}

impl Default for AlbedoWeights {
    fn default() -> Self {
        AlbedoWeights {
            blue: 0.356,
            red: 0.130,
            nir: 0.373,
            swir1: 0.085,
            swir2: 0.072,
            offset: -0.0018,
        }
    }
}

impl AlbedoWeights {
    pub fn evaluate(&self, blue: f64, red: f64, nir: f64, swir1: f64, swir2: f64) -> f64 {
        self.blue * blue
            + self.red * red
            + self.nir * nir
            + self.swir1 * swir1
            + self.swir2 * swir2
            + self.offset
    }
}

/// Per-pixel regression features; `None` where any input is missing or an
/// index is undefined.
#[derive(Debug, Clone)]
pub struct FeatureStack {
    pub air: Vec<Option<f64>>,
    pub ndvi: Vec<Option<f64>>,
    pub ndbi: Vec<Option<f64>>,
    pub albedo: Vec<Option<f64>>,
}

fn nd(a: f64, b: f64) -> Option<f64> {
    let s = a + b;
    (s != 0.0).then(|| (a - b) / s)
}

impl FeatureStack {
    pub fn from_stack(stack: &SceneStack, albedo: &AlbedoWeights) -> Result<Self> {
        let get = |n: &str| stack.channel(n);
        let (air, blue, red, nir, swir1, swir2) = (
            get(AIRTEMP)?,
            get("blue")?,
            get("red")?,
            get("nir")?,
            get("swir1")?,
            get("swir2")?,
        );
        let n = stack.spec().len();
        let mut f = FeatureStack {
            air: Vec::with_capacity(n),
            ndvi: Vec::with_capacity(n),
            ndbi: Vec::with_capacity(n),
            albedo: Vec::with_capacity(n),
        };
        for i in 0..n {
            let a = air.at(i).map(f64::from);
            let bands = (|| {
                Some((
                    blue.at(i)? as f64,
                    red.at(i)? as f64,
                    nir.at(i)? as f64,
                    swir1.at(i)? as f64,
                    swir2.at(i)? as f64,
                ))
            })();
            match bands {
                Some((b, r, ni, s1, s2)) => {
                    f.ndvi.push(nd(ni, r));
                    f.ndbi.push(nd(s1, ni));
                    f.albedo.push(Some(albedo.evaluate(b, r, ni, s1, s2)));
                }
                None => {
                    f.ndvi.push(None);
                    f.ndbi.push(None);
                    f.albedo.push(None);
                }
            }
            f.air.push(a);
        }
        Ok(f)
    }

    pub fn row(&self, i: usize) -> Option<[f64; 4]> {
        Some([self.air[i]?, self.ndvi[i]?, self.ndbi[i]?, self.albedo[i]?])
    }

    pub fn len(&self) -> usize {
        self.air.len()
    }

    pub fn is_empty(&self) -> bool {
        self.air.is_empty()
    }
}

/// `LST = w0 + w_airtemp·air + w_ndvi·ndvi + w_ndbi·ndbi + w_albedo·albedo`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearLstModel {
    pub w0: f64,
    pub w_airtemp: f64,
    pub w_ndvi: f64,
    pub w_ndbi: f64,
    pub w_albedo: f64,
    #[serde(default)]
    pub albedo: AlbedoWeights,
    #[serde(default = "default_label")]
    pub label: String,
}

fn default_label() -> String {
    "baseline".into()
}

impl LinearLstModel {
    pub fn constant(w0: f64) -> Self {
        LinearLstModel {
            w0,
            w_airtemp: 0.0,
            w_ndvi: 0.0,
            w_ndbi: 0.0,
            w_albedo: 0.0,
            albedo: AlbedoWeights::default(),
            label: default_label(),
        }
    }

    pub fn weights(&self) -> [f64; 4] {
        [self.w_airtemp, self.w_ndvi, self.w_ndbi, self.w_albedo]
    }

    pub fn evaluate(&self, x: [f64; 4]) -> f64 {
        let w = self.weights();
        self.w0 + w[0] * x[0] + w[1] * x[1] + w[2] * x[2] + w[3] * x[3]
    }

    pub fn validate(&self) -> Result<()> {
        if std::iter::once(self.w0)
            .chain(self.weights())
            .all(f64::is_finite)
        {
            Ok(())
        } else {
            Err(Error::InvalidParameter(
                "model weights must be finite".into(),
            ))
        }
    }
}

impl Predictor for LinearLstModel {
    fn identity(&self) -> &str {
        &self.label
    }

    fn predict(&self, stack: &SceneStack) -> Result<GeoGrid> {
        self.validate()?;
        let f = FeatureStack::from_stack(stack, &self.albedo)?;
        let air = stack.channel(AIRTEMP)?;
        let values: Vec<Option<f32>> = (0..f.len())
            .map(|i| {
                let x = f.row(i)?;
                Some(self.evaluate(x) as f32).filter(|v| v.is_finite())
            })
            .collect();
        Ok(GeoGrid::from_options(*stack.spec(), air.nodata(), &values)?
            .with_band("lst")
            .with_timestamp(Some(stack.timestamp)))
    }
}

pub const RIDGE_LAMBDA: f64 = 1e-8;
pub const MIN_PIXELS_PER_FEATURE: usize = 5;

/// Streaming normal equations for the four-feature model.
///
/// Sums are taken about the first accepted row, which keeps them exact for
/// constant data and well conditioned otherwise.
#[derive(Debug, Clone, Default)]
pub struct NormalEquations {
    shift: Option<([f64; 4], f64)>,
    n: usize,
    sx: [f64; 4],
    sy: f64,
    sxx: [[f64; 4]; 4],
    sxy: [f64; 4],
}

impl NormalEquations {
    pub fn push(&mut self, x: [f64; 4], y: f64) {
        let (kx, ky) = *self.shift.get_or_insert((x, y));
        let c: [f64; 4] = std::array::from_fn(|k| x[k] - kx[k]);
        let cy = y - ky;
        self.n += 1;
        self.sy += cy;
        for r in 0..4 {
            self.sx[r] += c[r];
            self.sxy[r] += c[r] * cy;
            for s in 0..=r {
                self.sxx[r][s] += c[r] * c[s];
            }
        }
    }

    /// Adds every pixel valid in all features and in the truth.
    pub fn add_scene(
        &mut self,
        stack: &SceneStack,
        truth: &GeoGrid,
        albedo: &AlbedoWeights,
    ) -> Result<()> {
        ensure_aligned(stack, truth)?;
        let f = FeatureStack::from_stack(stack, albedo)?;
        for i in 0..f.len() {
            if let (Some(x), Some(y)) = (f.row(i), truth.at(i)) {
                self.push(x, y as f64);
            }
        }
        Ok(())
    }

    pub fn count(&self) -> usize {
        self.n
    }

    /// Adds the rows of `other`, re-expressed about this accumulator's shift.
    pub fn merge(&mut self, other: &NormalEquations) {
        let Some((ox, oy)) = other.shift else { return };
        let (kx, ky) = *self.shift.get_or_insert((ox, oy));
        let d: [f64; 4] = std::array::from_fn(|k| ox[k] - kx[k]);
        let dy = oy - ky;
        let m = other.n as f64;
        self.n += other.n;
        self.sy += other.sy + m * dy;
        for r in 0..4 {
            self.sx[r] += other.sx[r] + m * d[r];
            self.sxy[r] += other.sxy[r] + d[r] * other.sy + dy * other.sx[r] + m * d[r] * dy;
            for s in 0..=r {
                self.sxx[r][s] +=
                    other.sxx[r][s] + d[r] * other.sx[s] + d[s] * other.sx[r] + m * d[r] * d[s];
            }
        }
    }

    /// Solves `(XᵀX + λI) w = Xᵀy` on centred features; the intercept
    /// comes from the means.
    pub fn solve(&self, albedo: &AlbedoWeights) -> Result<LinearLstModel> {
        let n = self.n;
        if n < MIN_PIXELS_PER_FEATURE * 4 {
            return Err(Error::RankDeficient(format!(
                "{n} usable pixels, need at least {}",
                MIN_PIXELS_PER_FEATURE * 4
            )));
        }
        let (kx, ky) = self.shift.expect("rows were pushed");
        let nf = n as f64;
        let dx: [f64; 4] = std::array::from_fn(|k| self.sx[k] / nf);
        let dy = self.sy / nf;
        let mut a = [[0.0f64; 4]; 4];
        let mut b = [0.0f64; 4];
        for r in 0..4 {
            b[r] = self.sxy[r] - nf * dx[r] * dy;
            for s in 0..=r {
                a[r][s] = self.sxx[r][s] - nf * dx[r] * dx[s];
                a[s][r] = a[r][s];
            }
            a[r][r] += RIDGE_LAMBDA;
        }
        let w = cholesky_solve(a, b)?;
        let mx: [f64; 4] = std::array::from_fn(|k| kx[k] + dx[k]);
        let w0 = (ky + dy) - (0..4).map(|k| w[k] * mx[k]).sum::<f64>();
        Ok(LinearLstModel {
            w0,
            w_airtemp: w[0],
            w_ndvi: w[1],
            w_ndbi: w[2],
            w_albedo: w[3],
            albedo: *albedo,
            label: default_label(),
        })
    }
}

/// Ordinary least squares of truth LST on (air temperature, NDVI, NDBI,
/// albedo) over every pixel valid in all of them, ridge `λ = 1e-8`.
pub fn fit_baseline(
    train: &[(SceneStack, GeoGrid)],
    albedo: &AlbedoWeights,
) -> Result<LinearLstModel> {
    let mut eq = NormalEquations::default();
    for (stack, truth) in train {
        eq.add_scene(stack, truth, albedo)?;
    }
    eq.solve(albedo)
}

fn cholesky_solve<const N: usize>(a: [[f64; N]; N], b: [f64; N]) -> Result<[f64; N]> {
    let mut l = [[0.0f64; N]; N];
    for i in 0..N {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[i][k] * l[j][k]).sum();
            if i == j {
                let d = a[i][i] - s;
                if !(d > 0.0) || !d.is_finite() {
                    return Err(Error::RankDeficient(format!(
                        "non-positive pivot {d:e} at feature {i}"
                    )));
                }
                l[i][i] = d.sqrt();
            } else {
                l[i][j] = (a[i][j] - s) / l[j][j];
            }
        }
    }
    let mut z = [0.0f64; N];
    for i in 0..N {
        z[i] = (b[i] - (0..i).map(|k| l[i][k] * z[k]).sum::<f64>()) / l[i][i];
    }
    let mut x = [0.0f64; N];
    for i in (0..N).rev() {
        x[i] = (z[i] - (i + 1..N).map(|k| l[k][i] * x[k]).sum::<f64>()) / l[i][i];
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::{GridSpec, DEFAULT_NODATA};
    use crate::workspace::SPECTRAL_BANDS;
    use chrono::{TimeZone, Utc};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn spec() -> GridSpec {
        GridSpec::new(40, 30, 0.0, 0.0, 30.0, 32633).unwrap()
    }

    fn random_stack(rng: &mut ChaCha8Rng) -> SceneStack {
        let mut ch: Vec<(String, GeoGrid)> = SPECTRAL_BANDS
            .iter()
            .map(|b| {
                (
                    b.to_string(),
                    GeoGrid::from_fn(spec(), DEFAULT_NODATA, |_, _| {
                        Some(rng.random_range(0.01f32..0.6))
                    })
                    .unwrap(),
                )
            })
            .collect();
        ch.push((
            AIRTEMP.into(),
            GeoGrid::from_fn(spec(), DEFAULT_NODATA, |_, _| {
                Some(rng.random_range(15.0f32..32.0))
            })
            .unwrap(),
        ));
        SceneStack::new("r", Utc.with_ymd_and_hms(2020, 7, 1, 10, 0, 0).unwrap(), ch).unwrap()
    }

    fn planted() -> LinearLstModel {
        LinearLstModel {
            w0: 4.0,
            w_airtemp: 0.9,
            w_ndvi: -5.5,
            w_ndbi: 3.2,
            w_albedo: -7.0,
            albedo: AlbedoWeights::default(),
            label: "planted".into(),
        }
    }

    fn truth_from(m: &LinearLstModel, s: &SceneStack) -> GeoGrid {
        // truth kept in f64 precision through an exact oracle, then stored
        let f = FeatureStack::from_stack(s, &m.albedo).unwrap();
        let vals: Vec<Option<f32>> = (0..f.len())
            .map(|i| f.row(i).map(|x| m.evaluate(x) as f32))
            .collect();
        GeoGrid::from_options(*s.spec(), DEFAULT_NODATA, &vals).unwrap()
    }

    #[test]
    fn constant_and_identity_models() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = random_stack(&mut rng);
        let c = LinearLstModel::constant(20.0).predict(&s).unwrap();
        assert!(c.values().iter().all(|&v| v == 20.0));
        let id = LinearLstModel {
            w_airtemp: 1.0,
            ..LinearLstModel::constant(0.0)
        };
        assert_eq!(
            id.predict(&s).unwrap().values(),
            s.channel(AIRTEMP).unwrap().values()
        );
    }

    #[test]
    fn predict_matches_scalar_evaluation() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let s = random_stack(&mut rng);
        let m = planted();
        let out = m.predict(&s).unwrap();
        for i in (0..s.spec().len()).step_by(1) {
            let g = |n: &str| s.channel(n).unwrap().at(i).unwrap() as f64;
            let (b, r, ni, s1, s2) = (g("blue"), g("red"), g("nir"), g("swir1"), g("swir2"));
            let albedo = 0.356 * b + 0.130 * r + 0.373 * ni + 0.085 * s1 + 0.072 * s2 - 0.0018;
            let expect = 4.0 + 0.9 * g(AIRTEMP) - 5.5 * (ni - r) / (ni + r)
                + 3.2 * (s1 - ni) / (s1 + ni)
                - 7.0 * albedo;
            assert!((out.at(i).unwrap() as f64 - expect).abs() < 1e-5);
        }
    }

    #[test]
    fn nodata_in_any_channel_is_absorbed() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for band in ["blue", "red", "nir", "swir1", "swir2", AIRTEMP] {
            let mut s = random_stack(&mut rng);
            let mut vals = s.channel(band).unwrap().values().to_vec();
            vals[7] = DEFAULT_NODATA;
            s.replace_channel(band, GeoGrid::new(spec(), DEFAULT_NODATA, vals).unwrap())
                .unwrap();
            let out = planted().predict(&s).unwrap();
            assert_eq!(out.at(7), None, "{band}");
            assert_eq!(out.valid_count(), spec().len() - 1);
        }
    }

    #[test]
    fn recovers_planted_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let m = planted();
        let train: Vec<(SceneStack, GeoGrid)> = (0..3)
            .map(|_| {
                let s = random_stack(&mut rng);
                let t = truth_from(&m, &s);
                (s, t)
            })
            .collect();
        let fit = fit_baseline(&train, &AlbedoWeights::default()).unwrap();
        // truth is stored as f32, so recovery is limited by that rounding
        for (a, b) in [
            (fit.w0, m.w0),
            (fit.w_airtemp, m.w_airtemp),
            (fit.w_ndvi, m.w_ndvi),
            (fit.w_ndbi, m.w_ndbi),
            (fit.w_albedo, m.w_albedo),
        ] {
            assert!((a - b).abs() < 1e-4, "{a} vs {b}");
        }
    }

    #[test]
    fn constant_truth_forces_zero_slopes() {
        let s = {
            let ch: Vec<(String, GeoGrid)> = SPECTRAL_BANDS
                .iter()
                .chain([AIRTEMP].iter())
                .map(|b| {
                    (
                        b.to_string(),
                        GeoGrid::filled(spec(), 0.3, DEFAULT_NODATA).unwrap(),
                    )
                })
                .collect();
            SceneStack::new("c", Utc.with_ymd_and_hms(2020, 7, 1, 10, 0, 0).unwrap(), ch).unwrap()
        };
        let truth = GeoGrid::filled(spec(), 27.5, DEFAULT_NODATA).unwrap();
        let fit = fit_baseline(&[(s, truth)], &AlbedoWeights::default()).unwrap();
        assert_eq!(fit.w0, 27.5);
        assert_eq!(fit.weights(), [0.0; 4]);
    }

    #[test]
    fn duplicated_training_set_gives_same_model() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let s = random_stack(&mut rng);
        let truth = GeoGrid::from_fn(spec(), DEFAULT_NODATA, |_, _| {
            Some(rng.random_range(20.0..40.0))
        })
        .unwrap();
        let one = fit_baseline(&[(s.clone(), truth.clone())], &AlbedoWeights::default()).unwrap();
        let two = fit_baseline(
            &[(s.clone(), truth.clone()), (s, truth)],
            &AlbedoWeights::default(),
        )
        .unwrap();
        for (a, b) in [(one.w0, two.w0)]
            .into_iter()
            .chain(one.weights().into_iter().zip(two.weights()))
        {
            assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0), "{a} vs {b}");
        }
    }

    #[test]
    fn too_few_pixels() {
        let small = GridSpec::new(3, 3, 0.0, 0.0, 30.0, 1).unwrap();
        let ch: Vec<(String, GeoGrid)> = SPECTRAL_BANDS
            .iter()
            .chain([AIRTEMP].iter())
            .map(|b| {
                (
                    b.to_string(),
                    GeoGrid::filled(small, 0.3, DEFAULT_NODATA).unwrap(),
                )
            })
            .collect();
        let s =
            SceneStack::new("c", Utc.with_ymd_and_hms(2020, 7, 1, 10, 0, 0).unwrap(), ch).unwrap();
        let t = GeoGrid::filled(small, 20.0, DEFAULT_NODATA).unwrap();
        assert!(matches!(
            fit_baseline(&[(s, t)], &AlbedoWeights::default()),
            Err(Error::RankDeficient(_))
        ));
    }

    #[test]
    fn missing_channel() {
        let ch = vec![(
            "red".to_string(),
            GeoGrid::filled(spec(), 0.1, DEFAULT_NODATA).unwrap(),
        )];
        let s =
            SceneStack::new("m", Utc.with_ymd_and_hms(2020, 7, 1, 10, 0, 0).unwrap(), ch).unwrap();
        assert!(matches!(
            planted().predict(&s),
            Err(Error::MissingChannel(_))
        ));
    }

    proptest! {
        #[test]
        fn airtemp_shift_is_linear(seed in any::<u64>(), c in -4i32..=4) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let s = random_stack(&mut rng);
            let m = planted();
            let before = m.predict(&s).unwrap();
            let mut forced = s.clone();
            let shifted = s.channel(AIRTEMP).unwrap().map(|v| Some((v as f64 + c as f64) as f32)).unwrap();
            forced.replace_channel(AIRTEMP, shifted).unwrap();
            let after = m.predict(&forced).unwrap();
            for i in 0..spec().len() {
                let d = after.at(i).unwrap() as f64 - before.at(i).unwrap() as f64;
                // f32 storage of inputs and outputs bounds the deviation
                prop_assert!((d - m.w_airtemp * c as f64).abs() < 1e-4);
            }
        }
    }

    #[test]
    fn merge_matches_single_pass() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let rows: Vec<([f64; 4], f64)> = (0..200)
            .map(|_| {
                let x: [f64; 4] = std::array::from_fn(|_| rng.random_range(-1.0..40.0));
                (x, 3.0 + x[0] - 2.0 * x[1] + rng.random_range(-0.5..0.5))
            })
            .collect();
        let mut all = NormalEquations::default();
        let (mut a, mut b) = (NormalEquations::default(), NormalEquations::default());
        for (i, (x, y)) in rows.iter().enumerate() {
            all.push(*x, *y);
            if i < 77 {
                a.push(*x, *y)
            } else {
                b.push(*x, *y)
            }
        }
        a.merge(&b);
        let albedo = AlbedoWeights::default();
        let (m1, m2) = (all.solve(&albedo).unwrap(), a.solve(&albedo).unwrap());
        assert_eq!(a.count(), 200);
        for (u, v) in m1.weights().iter().zip(m2.weights()) {
            assert!((u - v).abs() < 1e-9 * (1.0 + u.abs()), "{u} vs {v}");
        }
    }
}
