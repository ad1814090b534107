//! Deterministic PNG renders of layers with fixed per-layer color ramps.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::landcover::{LulcCategory, LulcLegend};
use crate::raster::{ensure_aligned, GeoGrid, GridStats};

/// Bumped whenever a ramp or encoding changes, since renders are compared byte for byte.
pub const PALETTE_VERSION: u32 = 1;

pub type Rgba = [u8; 4];

pub const TRANSPARENT: Rgba = [0, 0, 0, 0];

/// Piecewise-linear ramp over evenly spaced stops.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Palette {
    /// #313695 → #ffffbf → #a50026
    Thermal,
    /// #2166ac → #f7f7f7 → #b2182b
    Diverging,
    /// #a6611a → #f5f5f5 → #018571
    Vegetation,
    /// black → white
    Gray,
}

impl Palette {
    pub fn stops(self) -> &'static [[u8; 3]] {
        match self {
            Palette::Thermal => &[[0x31, 0x36, 0x95], [0xff, 0xff, 0xbf], [0xa5, 0x00, 0x26]],
            Palette::Diverging => &[[0x21, 0x66, 0xac], [0xf7, 0xf7, 0xf7], [0xb2, 0x18, 0x2b]],
            Palette::Vegetation => &[[0xa6, 0x61, 0x1a], [0xf5, 0xf5, 0xf5], [0x01, 0x85, 0x71]],
            Palette::Gray => &[[0, 0, 0], [255, 255, 255]],
        }
    }

    /// Color at `t ∈ [0, 1]` (clamped). Channels round half away from zero.
    pub fn color(self, t: f64) -> Rgba {
        let stops = self.stops();
        let segs = (stops.len() - 1) as f64;
        let t = if t.is_nan() { 0.0 } else { t.clamp(0.0, 1.0) };
        let pos = t * segs;
        let k = (pos.floor() as usize).min(stops.len() - 2);
        let f = pos - k as f64;
        let (a, b) = (stops[k], stops[k + 1]);
        let ch = |i: usize| (a[i] as f64 + (b[i] as f64 - a[i] as f64) * f).round() as u8;
        [ch(0), ch(1), ch(2), 255]
    }
}

impl FromStr for Palette {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "thermal" => Ok(Palette::Thermal),
            "diverging" => Ok(Palette::Diverging),
            "vegetation" => Ok(Palette::Vegetation),
            "gray" | "grey" => Ok(Palette::Gray),
            _ => Err(Error::InvalidParameter(format!("unknown palette `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ramp {
    pub palette: Palette,
    pub lo: f64,
    pub hi: f64,
}

impl Ramp {
    pub fn color(&self, v: f64) -> Rgba {
        self.palette.color((v - self.lo) / (self.hi - self.lo))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    Rgb,
    Ndvi,
    Lulc,
    Lst,
    Anomaly,
}

impl LayerKind {
    pub const ALL: [LayerKind; 5] = [
        LayerKind::Rgb,
        LayerKind::Ndvi,
        LayerKind::Lulc,
        LayerKind::Lst,
        LayerKind::Anomaly,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LayerKind::Rgb => "rgb",
            LayerKind::Ndvi => "ndvi",
            LayerKind::Lulc => "lulc",
            LayerKind::Lst => "lst",
            LayerKind::Anomaly => "anomaly",
        }
    }

    /// Fixed ramp for continuous layers.
    pub fn default_ramp(self) -> Option<Ramp> {
        match self {
            LayerKind::Lst => Some(Ramp {
                palette: Palette::Thermal,
                lo: 10.0,
                hi: 50.0,
            }),
            LayerKind::Anomaly => Some(Ramp {
                palette: Palette::Diverging,
                lo: -6.0,
                hi: 6.0,
            }),
            LayerKind::Ndvi => Some(Ramp {
                palette: Palette::Vegetation,
                lo: -1.0,
                hi: 1.0,
            }),
            LayerKind::Rgb | LayerKind::Lulc => None,
        }
    }
}

impl fmt::Display for LayerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LayerKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        LayerKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown layer `{s}`")))
    }
}

/// Display color of a land-cover class.
pub fn category_color(c: LulcCategory) -> Rgba {
    match c {
        LulcCategory::Water => [0x41, 0x9b, 0xdf, 255],
        LulcCategory::Trees => [0x39, 0x7d, 0x49, 255],
        LulcCategory::FloodedVegetation => [0x7a, 0x87, 0xc6, 255],
        LulcCategory::Crops => [0xe4, 0x96, 0x35, 255],
        LulcCategory::Built => [0xc4, 0x28, 0x1b, 255],
        LulcCategory::BareGround => [0xa5, 0x9b, 0x8f, 255],
        LulcCategory::SnowIce => [0xa8, 0xeb, 0xff, 255],
        LulcCategory::Clouds => [0x61, 0x61, 0x61, 255],
        LulcCategory::Rangeland => [0xe3, 0xe2, 0xc3, 255],
    }
}

/// Rendered pixels, row-major RGBA.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<Rgba>,
}

impl Image {
    pub fn encode_png(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        {
            let mut enc = png::Encoder::new(&mut out, self.width as u32, self.height as u32);
            enc.set_color(png::ColorType::Rgba);
            enc.set_depth(png::BitDepth::Eight);
            let mut w = enc
                .write_header()
                .map_err(|e| Error::InvalidParameter(format!("png header: {e}")))?;
            let data: Vec<u8> = self.pixels.iter().flatten().copied().collect();
            w.write_image_data(&data)
                .map_err(|e| Error::InvalidParameter(format!("png data: {e}")))?;
        }
        Ok(out)
    }
}

/// Continuous grid through a ramp; nodata is transparent.
pub fn render_ramp(grid: &GeoGrid, ramp: &Ramp) -> Image {
    Image {
        width: grid.width(),
        height: grid.height(),
        pixels: grid
            .iter()
            .map(|v| v.map_or(TRANSPARENT, |v| ramp.color(v as f64)))
            .collect(),
    }
}

/// Land-cover codes through the legend; unknown codes and nodata are transparent.
pub fn render_categorical(lulc: &GeoGrid, legend: &LulcLegend) -> Image {
    Image {
        width: lulc.width(),
        height: lulc.height(),
        pixels: lulc
            .iter()
            .map(|v| {
                v.and_then(|v| legend.category(v.round() as i32))
                    .map_or(TRANSPARENT, category_color)
            })
            .collect(),
    }
}

/// True-color composite; reflectance `[0, max_reflectance]` stretched to `[0, 255]`.
pub fn render_rgb(
    red: &GeoGrid,
    green: &GeoGrid,
    blue: &GeoGrid,
    max_reflectance: f64,
) -> Result<Image> {
    ensure_aligned(red, green)?;
    ensure_aligned(red, blue)?;
    let s = |v: f32| ((v as f64 / max_reflectance).clamp(0.0, 1.0) * 255.0).round() as u8;
    let pixels = (0..red.spec().len())
        .map(|i| match (red.at(i), green.at(i), blue.at(i)) {
            (Some(r), Some(g), Some(b)) => [s(r), s(g), s(b), 255],
            _ => TRANSPARENT,
        })
        .collect();
    Ok(Image {
        width: red.width(),
        height: red.height(),
        pixels,
    })
}

/// Stats sidecar served with a rendered layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerStats {
    pub layer: LayerKind,
    pub min: Option<f64>,
    pub mean: Option<f64>,
    pub max: Option<f64>,
    pub count: usize,
    pub ramp: Option<Ramp>,
    pub palette_version: u32,
}

impl LayerStats {
    pub fn new(layer: LayerKind, stats: Option<GridStats>, ramp: Option<Ramp>) -> Self {
        LayerStats {
            layer,
            min: stats.map(|s| s.min),
            mean: stats.map(|s| s.mean),
            max: stats.map(|s| s.max),
            count: stats.map_or(0, |s| s.count),
            ramp,
            palette_version: PALETTE_VERSION,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::{GridSpec, DEFAULT_NODATA};

    fn spec(w: usize) -> GridSpec {
        GridSpec::new(w, 1, 0.0, 0.0, 30.0, 1).unwrap()
    }

    #[test]
    fn thermal_endpoints_and_midpoint() {
        let p = Palette::Thermal;
        assert_eq!(p.color(0.0), [0x31, 0x36, 0x95, 255]);
        assert_eq!(p.color(0.5), [0xff, 0xff, 0xbf, 255]);
        assert_eq!(p.color(1.0), [0xa5, 0x00, 0x26, 255]);
        assert_eq!(p.color(-3.0), p.color(0.0));
        assert_eq!(p.color(7.0), p.color(1.0));
    }

    #[test]
    fn three_value_grid_matches_hand_ramp() {
        let g = GeoGrid::new(spec(3), DEFAULT_NODATA, vec![20.0, 40.0, DEFAULT_NODATA]).unwrap();
        let img = render_ramp(&g, &LayerKind::Lst.default_ramp().unwrap());
        // 20 °C is t = 0.25: halfway from #313695 to #ffffbf
        let half = |a: u8, b: u8| ((a as f64 + b as f64) / 2.0).round() as u8;
        assert_eq!(
            img.pixels[0],
            [half(0x31, 0xff), half(0x36, 0xff), half(0x95, 0xbf), 255]
        );
        // 40 °C is t = 0.75: halfway from #ffffbf to #a50026
        assert_eq!(
            img.pixels[1],
            [half(0xff, 0xa5), half(0xff, 0x00), half(0xbf, 0x26), 255]
        );
        assert_eq!(img.pixels[2], TRANSPARENT);
    }

    #[test]
    fn constant_grid_is_single_color_and_png_is_deterministic() {
        let g = GeoGrid::filled(
            GridSpec::new(8, 5, 0.0, 0.0, 30.0, 1).unwrap(),
            31.5,
            DEFAULT_NODATA,
        )
        .unwrap();
        let img = render_ramp(&g, &LayerKind::Lst.default_ramp().unwrap());
        assert!(img.pixels.iter().all(|p| *p == img.pixels[0]));
        let a = img.encode_png().unwrap();
        assert_eq!(a, img.encode_png().unwrap());
        assert_eq!(&a[1..4], b"PNG");
        let dec = png::Decoder::new(std::io::Cursor::new(a));
        let reader = dec.read_info().unwrap();
        assert_eq!((reader.info().width, reader.info().height), (8, 5));
    }

    #[test]
    fn categorical_and_rgb() {
        let legend = LulcLegend::default();
        let g = GeoGrid::new(spec(3), DEFAULT_NODATA, vec![2.0, 7.0, 99.0]).unwrap();
        let img = render_categorical(&g, &legend);
        assert_eq!(img.pixels[0], category_color(LulcCategory::Trees));
        assert_eq!(img.pixels[2], TRANSPARENT);
        let r = GeoGrid::new(spec(3), DEFAULT_NODATA, vec![0.0, 0.15, 0.6]).unwrap();
        let rgb = render_rgb(&r, &r, &r, 0.3).unwrap();
        assert_eq!(rgb.pixels[1], [128, 128, 128, 255]);
        assert_eq!(rgb.pixels[2], [255, 255, 255, 255]);
    }

    #[test]
    fn layer_names_round_trip() {
        for k in LayerKind::ALL {
            assert_eq!(k.name().parse::<LayerKind>().unwrap(), k);
        }
        assert!("heat".parse::<LayerKind>().is_err());
    }
}
