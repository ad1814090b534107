//! Spectral indices, NDVI-threshold emissivity and split-window LST.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{ensure_aligned, GeoGrid};

pub const KELVIN_OFFSET: f64 = 273.15;

fn normalized_difference(a: &GeoGrid, b: &GeoGrid) -> Result<GeoGrid> {
    a.zip_map(b, |a, b| {
        let (a, b) = (a as f64, b as f64);
        let sum = a + b;
        (sum != 0.0).then(|| ((a - b) / sum) as f32)
    })
}

/// `(nir - red) / (nir + red)`; a zero denominator gives nodata.
pub fn ndvi(nir: &GeoGrid, red: &GeoGrid) -> Result<GeoGrid> {
    normalized_difference(nir, red)
}

/// `(swir1 - nir) / (swir1 + nir)`.
pub fn ndbi(swir1: &GeoGrid, nir: &GeoGrid) -> Result<GeoGrid> {
    normalized_difference(swir1, nir)
}

/// NDVI-threshold emissivity for one thermal band.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmissivityParams {
    pub ndvi_soil_threshold: f64,
    pub ndvi_veg_threshold: f64,
    pub eps_water: f64,
    pub eps_soil: f64,
    pub eps_veg: f64,
}

impl Default for EmissivityParams {
    fn default() -> Self {
        EmissivityParams {
            ndvi_soil_threshold: 0.2,
            ndvi_veg_threshold: 0.5,
            eps_water: 0.99,
            eps_soil: 0.97,
            eps_veg: 0.99,
        }
    }
}

impl EmissivityParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.ndvi_soil_threshold < self.ndvi_veg_threshold) {
            return Err(Error::InvalidParameter(format!(
                "NDVI soil threshold {} must be below vegetation threshold {}",
                self.ndvi_soil_threshold, self.ndvi_veg_threshold
            )));
        }
        for (name, e) in [
            ("eps_water", self.eps_water),
            ("eps_soil", self.eps_soil),
            ("eps_veg", self.eps_veg),
        ] {
            if !(e > 0.0 && e <= 1.0) {
                return Err(Error::InvalidParameter(format!(
                    "{name} = {e} is outside (0, 1]"
                )));
            }
        }
        Ok(())
    }

    /// Fractional vegetation cover, squared-ratio form.
    pub fn fractional_vegetation(&self, ndvi: f64) -> f64 {
        let r = (ndvi - self.ndvi_soil_threshold)
            / (self.ndvi_veg_threshold - self.ndvi_soil_threshold);
        r * r
    }

    pub fn evaluate(&self, ndvi: f64) -> f64 {
        if ndvi < 0.0 {
            self.eps_water
        } else if ndvi < self.ndvi_soil_threshold {
            self.eps_soil
        } else if ndvi > self.ndvi_veg_threshold {
            self.eps_veg
        } else {
            let fv = self.fractional_vegetation(ndvi);
            self.eps_veg * fv + self.eps_soil * (1.0 - fv)
        }
    }
}

pub fn emissivity(ndvi: &GeoGrid, p: &EmissivityParams) -> Result<GeoGrid> {
    p.validate()?;
    ndvi.map(|v| Some(p.evaluate(v as f64) as f32))
}

/// Mean and difference (`eps_i - eps_j`) emissivity grids for the two thermal bands.
pub fn emissivity_pair(
    ndvi: &GeoGrid,
    band_i: &EmissivityParams,
    band_j: &EmissivityParams,
) -> Result<(GeoGrid, GeoGrid)> {
    let ei = emissivity(ndvi, band_i)?;
    let ej = emissivity(ndvi, band_j)?;
    let mean = ei.zip_map(&ej, |a, b| Some(((a as f64 + b as f64) / 2.0) as f32))?;
    let diff = ei.zip_map(&ej, |a, b| Some((a as f64 - b as f64) as f32))?;
    Ok((mean, diff))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TemperatureUnit {
    #[default]
    Celsius,
    Kelvin,
}

/// Coefficients `b0..b7` of the split-window form, with their provenance.
///
/// `input_unit` is the unit the coefficient set was calibrated for; grids
/// are always °C and are converted around the evaluation when needed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitWindowCoefficients {
    pub b: [f64; 8],
    pub source_label: String,
    #[serde(default)]
    pub input_unit: TemperatureUnit,
}

impl SplitWindowCoefficients {
    /// `LST = (t_i + t_j) / 2`, the coefficient identity.
    pub fn mean_brightness() -> Self {
        SplitWindowCoefficients {
            b: [0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
            source_label: "mean-brightness".into(),
            input_unit: TemperatureUnit::Celsius,
        }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "mean-brightness" => Some(Self::mean_brightness()),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.b.iter().all(|b| b.is_finite()) {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "split-window coefficients `{}` are not all finite",
                self.source_label
            )))
        }
    }

    /// Scalar evaluation; `None` when `eps_mean <= 0`. Temperatures in °C.
    pub fn evaluate(&self, t_i: f64, t_j: f64, eps_mean: f64, eps_diff: f64) -> Option<f64> {
        if eps_mean <= 0.0 {
            return None;
        }
        let shift = match self.input_unit {
            TemperatureUnit::Celsius => 0.0,
            TemperatureUnit::Kelvin => KELVIN_OFFSET,
        };
        let (ti, tj) = (t_i + shift, t_j + shift);
        let b = &self.b;
        let e = eps_mean;
        let a = (1.0 - e) / e;
        let d = eps_diff / (e * e);
        let lst = b[0]
            + (b[1] + b[2] * a + b[3] * d) * (ti + tj) / 2.0
            + (b[4] + b[5] * a + b[6] * d) * (ti - tj) / 2.0
            + b[7] * (ti - tj) * (ti - tj);
        Some(lst - shift)
    }
}

pub fn split_window_lst(
    t_i: &GeoGrid,
    t_j: &GeoGrid,
    eps_mean: &GeoGrid,
    eps_diff: &GeoGrid,
    c: &SplitWindowCoefficients,
) -> Result<GeoGrid> {
    c.validate()?;
    for g in [t_j, eps_mean, eps_diff] {
        ensure_aligned(t_i, g)?;
    }
    let values: Vec<Option<f32>> = t_i
        .iter()
        .zip(t_j.iter())
        .zip(eps_mean.iter().zip(eps_diff.iter()))
        .map(|((a, b), (e, d))| {
            let (a, b, e, d) = (a?, b?, e?, d?);
            c.evaluate(a as f64, b as f64, e as f64, d as f64)
                .map(|v| v as f32)
                .filter(|v| v.is_finite())
        })
        .collect();
    GeoGrid::from_options(*t_i.spec(), t_i.nodata(), &values)
}

pub fn kelvin_to_celsius(g: &GeoGrid) -> Result<GeoGrid> {
    g.map(|v| Some((v as f64 - KELVIN_OFFSET) as f32))
}
