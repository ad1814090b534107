//! Georeferenced grid primitives.
//!
//! Grids are north-up with square pixels. `origin_x`/`origin_y` locate the
//! outer top-left corner of pixel (0, 0); the centre of pixel `(col, row)`
//! sits at `(origin_x + (col + 0.5) * pixel_size, origin_y - (row + 0.5) * pixel_size)`.
//! Values are stored row-major.

mod io;
mod resample;

#[cfg(feature = "geotiff")]
pub mod geotiff;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use io::{read_grid, read_grid_header, sidecar_path, write_grid, GridHeader};
pub use resample::resample_majority;

/// Default nodata sentinel for grids produced by this crate.
pub const DEFAULT_NODATA: f32 = -9999.0;

/// Geometry of a grid without its values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub width: usize,
    pub height: usize,
    pub origin_x: f64,
    pub origin_y: f64,
    pub pixel_size: f64,
    #[serde(rename = "epsg")]
    pub crs_code: u32,
}

impl GridSpec {
    pub fn new(
        width: usize,
        height: usize,
        origin_x: f64,
        origin_y: f64,
        pixel_size: f64,
        crs_code: u32,
    ) -> Result<Self> {
        let spec = GridSpec {
            width,
            height,
            origin_x,
            origin_y,
            pixel_size,
            crs_code,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidGrid(format!(
                "dimensions must be positive, got {}x{}",
                self.width, self.height
            )));
        }
        if !(self.pixel_size.is_finite() && self.pixel_size > 0.0) {
            return Err(Error::InvalidGrid(format!(
                "pixel size must be positive, got {}",
                self.pixel_size
            )));
        }
        if !(self.origin_x.is_finite() && self.origin_y.is_finite()) {
            return Err(Error::InvalidGrid("origin must be finite".into()));
        }
        Ok(())
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.width * self.height
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, col: usize, row: usize) -> usize {
        row * self.width + col
    }

    /// World coordinates of a pixel centre.
    pub fn pixel_center(&self, col: usize, row: usize) -> (f64, f64) {
        (
            self.origin_x + (col as f64 + 0.5) * self.pixel_size,
            self.origin_y - (row as f64 + 0.5) * self.pixel_size,
        )
    }

    /// Pixel containing a world coordinate, if inside the grid.
    pub fn pixel_at(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        let col = ((x - self.origin_x) / self.pixel_size).floor();
        let row = ((self.origin_y - y) / self.pixel_size).floor();
        if col < 0.0 || row < 0.0 || col >= self.width as f64 || row >= self.height as f64 {
            return None;
        }
        Some((col as usize, row as usize))
    }

    pub fn pixel_area(&self) -> f64 {
        self.pixel_size * self.pixel_size
    }
}

/// A rectangle of pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PixelWindow {
    pub col: usize,
    pub row: usize,
    pub width: usize,
    pub height: usize,
}

impl PixelWindow {
    pub fn new(col: usize, row: usize, width: usize, height: usize) -> Self {
        PixelWindow {
            col,
            row,
            width,
            height,
        }
    }

    pub fn full(spec: &GridSpec) -> Self {
        PixelWindow::new(0, 0, spec.width, spec.height)
    }

    fn check(&self, spec: &GridSpec) -> Result<()> {
        if self.width == 0
            || self.height == 0
            || self.col + self.width > spec.width
            || self.row + self.height > spec.height
        {
            return Err(Error::OutOfBounds(format!(
                "{}x{} at ({}, {}) in a {}x{} grid",
                self.width, self.height, self.col, self.row, spec.width, spec.height
            )));
        }
        Ok(())
    }

    fn cropped_spec(&self, spec: &GridSpec) -> GridSpec {
        GridSpec {
            width: self.width,
            height: self.height,
            origin_x: spec.origin_x + self.col as f64 * spec.pixel_size,
            origin_y: spec.origin_y - self.row as f64 * spec.pixel_size,
            pixel_size: spec.pixel_size,
            crs_code: spec.crs_code,
        }
    }
}

#[inline]
fn same_value(a: f32, b: f32) -> bool {
    a == b || (a.is_nan() && b.is_nan())
}

/// A single-band georeferenced raster of `f32` values.
#[derive(Debug, Clone, PartialEq)]
pub struct GeoGrid {
    spec: GridSpec,
    nodata: f32,
    values: Vec<f32>,
    /// Band name carried through the portable format.
    pub band: Option<String>,
    /// Acquisition instant carried through the portable format.
    pub timestamp: Option<DateTime<Utc>>,
}

impl GeoGrid {
    /// Builds a grid, checking the length and that every value is finite or nodata.
    pub fn new(spec: GridSpec, nodata: f32, values: Vec<f32>) -> Result<Self> {
        spec.validate()?;
        if values.len() != spec.len() {
            return Err(Error::InvalidGrid(format!(
                "expected {} values, got {}",
                spec.len(),
                values.len()
            )));
        }
        if nodata.is_infinite() {
            return Err(Error::InvalidGrid(
                "nodata sentinel must not be infinite".into(),
            ));
        }
        if let Some(i) = values
            .iter()
            .position(|&v| !v.is_finite() && !same_value(v, nodata))
        {
            return Err(Error::InvalidGrid(format!(
                "value at index {i} is neither finite nor nodata"
            )));
        }
        Ok(GeoGrid {
            spec,
            nodata,
            values,
            band: None,
            timestamp: None,
        })
    }

    pub fn filled(spec: GridSpec, value: f32, nodata: f32) -> Result<Self> {
        GeoGrid::new(spec, nodata, vec![value; spec.len()])
    }

    /// Builds a grid from `f(col, row)`; `None` becomes nodata.
    pub fn from_fn(
        spec: GridSpec,
        nodata: f32,
        mut f: impl FnMut(usize, usize) -> Option<f32>,
    ) -> Result<Self> {
        let mut values = Vec::with_capacity(spec.len());
        for row in 0..spec.height {
            for col in 0..spec.width {
                values.push(f(col, row).unwrap_or(nodata));
            }
        }
        GeoGrid::new(spec, nodata, values)
    }

    /// Builds a grid from per-pixel optional values.
    pub fn from_options(spec: GridSpec, nodata: f32, values: &[Option<f32>]) -> Result<Self> {
        GeoGrid::new(
            spec,
            nodata,
            values.iter().map(|v| v.unwrap_or(nodata)).collect(),
        )
    }

    pub fn with_band(mut self, band: impl Into<String>) -> Self {
        self.band = Some(band.into());
        self
    }

    pub fn with_timestamp(mut self, timestamp: Option<DateTime<Utc>>) -> Self {
        self.timestamp = timestamp;
        self
    }

    #[inline]
    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.spec.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.spec.height
    }

    #[inline]
    pub fn nodata(&self) -> f32 {
        self.nodata
    }

    /// Raw values including nodata sentinels.
    #[inline]
    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f32> {
        self.values
    }

    #[inline]
    pub fn is_nodata_value(&self, v: f32) -> bool {
        same_value(v, self.nodata)
    }

    /// Value at a flat index, `None` for nodata.
    #[inline]
    pub fn at(&self, idx: usize) -> Option<f32> {
        let v = self.values[idx];
        if self.is_nodata_value(v) {
            None
        } else {
            Some(v)
        }
    }

    #[inline]
    pub fn get(&self, col: usize, row: usize) -> Option<f32> {
        self.at(self.spec.index(col, row))
    }

    /// Iterates over `Option<f32>` per pixel in row-major order.
    pub fn iter(&self) -> impl Iterator<Item = Option<f32>> + '_ {
        self.values.iter().map(move |&v| {
            if self.is_nodata_value(v) {
                None
            } else {
                Some(v)
            }
        })
    }

    pub fn valid_count(&self) -> usize {
        self.iter().filter(Option::is_some).count()
    }

    /// Same geometry, new values; `None` maps to this grid's nodata.
    pub fn map(&self, mut f: impl FnMut(f32) -> Option<f32>) -> Result<GeoGrid> {
        let values = self
            .iter()
            .map(|v| v.and_then(&mut f).unwrap_or(self.nodata))
            .collect();
        GeoGrid::new(self.spec, self.nodata, values)
    }

    /// Pixelwise binary operation; nodata in either operand yields nodata.
    pub fn zip_map(
        &self,
        other: &GeoGrid,
        mut f: impl FnMut(f32, f32) -> Option<f32>,
    ) -> Result<GeoGrid> {
        ensure_aligned(self, other)?;
        let values = self
            .iter()
            .zip(other.iter())
            .map(|(a, b)| match (a, b) {
                (Some(a), Some(b)) => f(a, b).filter(|v| v.is_finite()).unwrap_or(self.nodata),
                _ => self.nodata,
            })
            .collect();
        GeoGrid::new(self.spec, self.nodata, values)
    }

    /// Minimum, mean and maximum over valid pixels.
    pub fn stats(&self) -> Option<GridStats> {
        let mut n = 0usize;
        let mut sum = 0.0f64;
        let mut min = f64::INFINITY;
        let mut max = f64::NEG_INFINITY;
        for v in self.iter().flatten() {
            let v = v as f64;
            n += 1;
            sum += v;
            min = min.min(v);
            max = max.max(v);
        }
        (n > 0).then(|| GridStats {
            min,
            mean: sum / n as f64,
            max,
            count: n,
        })
    }
}

/// Summary statistics over the valid pixels of a grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridStats {
    pub min: f64,
    pub mean: f64,
    pub max: f64,
    pub count: usize,
}

/// Something with grid geometry.
pub trait HasGeometry {
    fn geometry(&self) -> &GridSpec;
}

impl HasGeometry for GeoGrid {
    fn geometry(&self) -> &GridSpec {
        &self.spec
    }
}

impl HasGeometry for PixelMask {
    fn geometry(&self) -> &GridSpec {
        &self.spec
    }
}

impl HasGeometry for GridSpec {
    fn geometry(&self) -> &GridSpec {
        self
    }
}

/// True iff both grids share width, height, origin, pixel size and CRS.
pub fn align_check(a: &impl HasGeometry, b: &impl HasGeometry) -> bool {
    a.geometry() == b.geometry()
}

pub fn ensure_aligned(a: &impl HasGeometry, b: &impl HasGeometry) -> Result<()> {
    if align_check(a, b) {
        Ok(())
    } else {
        Err(Error::Misaligned(format!(
            "{:?} vs {:?}",
            a.geometry(),
            b.geometry()
        )))
    }
}

/// Extracts a pixel window; retained pixels keep their world coordinates.
pub fn crop(g: &GeoGrid, window: PixelWindow) -> Result<GeoGrid> {
    window.check(&g.spec)?;
    let mut values = Vec::with_capacity(window.width * window.height);
    for row in window.row..window.row + window.height {
        let start = g.spec.index(window.col, row);
        values.extend_from_slice(&g.values[start..start + window.width]);
    }
    let mut out = GeoGrid::new(window.cropped_spec(&g.spec), g.nodata, values)?;
    out.band = g.band.clone();
    out.timestamp = g.timestamp;
    Ok(out)
}

/// A boolean raster sharing grid geometry rules with [`GeoGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct PixelMask {
    spec: GridSpec,
    values: Vec<bool>,
}

impl PixelMask {
    pub fn new(spec: GridSpec, values: Vec<bool>) -> Result<Self> {
        spec.validate()?;
        if values.len() != spec.len() {
            return Err(Error::InvalidGrid(format!(
                "expected {} mask values, got {}",
                spec.len(),
                values.len()
            )));
        }
        Ok(PixelMask { spec, values })
    }

    pub fn empty(spec: GridSpec) -> Self {
        PixelMask {
            values: vec![false; spec.len()],
            spec,
        }
    }

    pub fn from_fn(spec: GridSpec, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut values = Vec::with_capacity(spec.len());
        for row in 0..spec.height {
            for col in 0..spec.width {
                values.push(f(col, row));
            }
        }
        PixelMask { spec, values }
    }

    #[inline]
    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    #[inline]
    pub fn values(&self) -> &[bool] {
        &self.values
    }

    #[inline]
    pub fn at(&self, idx: usize) -> bool {
        self.values[idx]
    }

    #[inline]
    pub fn get(&self, col: usize, row: usize) -> bool {
        self.values[self.spec.index(col, row)]
    }

    pub fn set(&mut self, col: usize, row: usize, value: bool) {
        let idx = self.spec.index(col, row);
        self.values[idx] = value;
    }

    pub fn count(&self) -> usize {
        self.values.iter().filter(|&&v| v).count()
    }

    pub fn any(&self) -> bool {
        self.values.iter().any(|&v| v)
    }

    pub fn all(&self) -> bool {
        self.values.iter().all(|&v| v)
    }

    pub fn and(&self, other: &PixelMask) -> Result<PixelMask> {
        ensure_aligned(self, other)?;
        Ok(PixelMask {
            spec: self.spec,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| a && b)
                .collect(),
        })
    }

    pub fn or(&self, other: &PixelMask) -> Result<PixelMask> {
        ensure_aligned(self, other)?;
        Ok(PixelMask {
            spec: self.spec,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| a || b)
                .collect(),
        })
    }

    pub fn not(&self) -> PixelMask {
        PixelMask {
            spec: self.spec,
            values: self.values.iter().map(|&v| !v).collect(),
        }
    }

    /// Encodes the mask as a 0/1 grid for the portable format.
    pub fn to_grid(&self) -> GeoGrid {
        GeoGrid::new(
            self.spec,
            DEFAULT_NODATA,
            self.values
                .iter()
                .map(|&v| if v { 1.0 } else { 0.0 })
                .collect(),
        )
        .expect("mask geometry already validated")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(w: usize, h: usize) -> GridSpec {
        GridSpec::new(w, h, 500_000.0, 5_000_000.0, 30.0, 32633).unwrap()
    }

    fn coord_grid(w: usize, h: usize) -> GeoGrid {
        GeoGrid::from_fn(spec(w, h), DEFAULT_NODATA, |x, y| {
            Some(x as f32 + 1000.0 * y as f32)
        })
        .unwrap()
    }

    #[test]
    fn rejects_bad_geometry() {
        assert!(GridSpec::new(0, 3, 0.0, 0.0, 30.0, 1).is_err());
        assert!(GridSpec::new(3, 3, 0.0, 0.0, 0.0, 1).is_err());
        assert!(GeoGrid::new(spec(2, 2), -1.0, vec![1.0; 3]).is_err());
        assert!(GeoGrid::new(spec(2, 2), -1.0, vec![1.0, f32::NAN, 0.0, 0.0]).is_err());
        assert!(GeoGrid::new(spec(2, 2), f32::NAN, vec![1.0, f32::NAN, 0.0, 0.0]).is_ok());
    }

    #[test]
    fn align_check_is_geometry_only() {
        let g = coord_grid(4, 3);
        assert!(align_check(&g, &g));
        let other = g.map(|v| Some(v * 2.0)).unwrap();
        assert!(align_check(&g, &other));
        let mut shifted_spec = *g.spec();
        shifted_spec.origin_x += 30.0;
        let shifted = GeoGrid::new(shifted_spec, g.nodata(), g.values().to_vec()).unwrap();
        assert!(!align_check(&g, &shifted));
    }

    #[test]
    fn crop_full_and_single_pixel() {
        let g = coord_grid(5, 4);
        assert_eq!(crop(&g, PixelWindow::full(g.spec())).unwrap(), g);
        let one = crop(&g, PixelWindow::new(0, 0, 1, 1)).unwrap();
        assert_eq!(one.values(), &[0.0]);
        assert_eq!(one.spec().origin_x, g.spec().origin_x);
        assert_eq!(one.spec().origin_y, g.spec().origin_y);
        assert!(crop(&g, PixelWindow::new(3, 0, 3, 1)).is_err());
        assert!(crop(&g, PixelWindow::new(0, 0, 0, 1)).is_err());
    }

    #[test]
    fn crop_interior_keeps_world_coordinates() {
        let g = coord_grid(9, 7);
        let w = PixelWindow::new(2, 3, 4, 2);
        let c = crop(&g, w).unwrap();
        for row in 0..c.height() {
            for col in 0..c.width() {
                let (x, y) = c.spec().pixel_center(col, row);
                let (sc, sr) = g.spec().pixel_at(x, y).unwrap();
                assert_eq!(c.get(col, row), Some(sc as f32 + 1000.0 * sr as f32));
            }
        }
    }

    #[test]
    fn pixel_at_inverts_center() {
        let s = spec(6, 5);
        for row in 0..5 {
            for col in 0..6 {
                let (x, y) = s.pixel_center(col, row);
                assert_eq!(s.pixel_at(x, y), Some((col, row)));
            }
        }
        assert_eq!(s.pixel_at(s.origin_x - 1.0, s.origin_y - 1.0), None);
    }

    #[test]
    fn zip_map_absorbs_nodata() {
        let a = GeoGrid::new(spec(2, 1), -1.0, vec![1.0, -1.0]).unwrap();
        let b = GeoGrid::new(spec(2, 1), -1.0, vec![2.0, 3.0]).unwrap();
        let c = a.zip_map(&b, |x, y| Some(x + y)).unwrap();
        assert_eq!(c.values(), &[3.0, -1.0]);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn crop_composes(
                w in 1usize..12, h in 1usize..12,
                a in (0usize..12, 0usize..12, 1usize..12, 1usize..12),
                b in (0usize..12, 0usize..12, 1usize..12, 1usize..12),
            ) {
                let g = coord_grid(w, h);
                let w1 = PixelWindow::new(a.0 % w, a.1 % h, 1 + (a.2 - 1) % (w - a.0 % w), 1 + (a.3 - 1) % (h - a.1 % h));
                let c1 = crop(&g, w1).unwrap();
                let w2 = PixelWindow::new(b.0 % w1.width, b.1 % w1.height,
                    1 + (b.2 - 1) % (w1.width - b.0 % w1.width), 1 + (b.3 - 1) % (w1.height - b.1 % w1.height));
                let c12 = crop(&c1, w2).unwrap();
                let composed = PixelWindow::new(w1.col + w2.col, w1.row + w2.row, w2.width, w2.height);
                prop_assert_eq!(c12, crop(&g, composed).unwrap());
            }
        }
    }
}
