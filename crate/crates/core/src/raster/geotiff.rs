//! Single-band GeoTIFF import.
//!
//! Only what the ingestion boundary needs: one band, uncompressed or DEFLATE
//! strips, georeferencing from the pixel-scale and tie-point tags, EPSG from
//! the GeoKey directory and nodata from the GDAL nodata tag.

use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use tiff::decoder::{Decoder, DecodingResult, Limits};
use tiff::tags::Tag;
use tiff::ColorType;

use super::{GeoGrid, GridSpec, DEFAULT_NODATA};
use crate::error::{Error, Result};

const PROJECTED_CS_TYPE: u16 = 3072;
const GEOGRAPHIC_TYPE: u16 = 2048;
const RASTER_TYPE: u16 = 1025;
const RASTER_PIXEL_IS_POINT: u16 = 2;

fn tiff_err(e: impl std::fmt::Display) -> Error {
    Error::GeoTiff(e.to_string())
}

fn geo_key(directory: &[u16], key: u16) -> Option<u16> {
    if directory.len() < 4 {
        return None;
    }
    let n = directory[3] as usize;
    directory[4..]
        .chunks_exact(4)
        .take(n)
        .find(|entry| entry[0] == key && entry[1] == 0)
        .map(|entry| entry[3])
}

/// Reads a single-band GeoTIFF into a [`GeoGrid`].
pub fn import_geotiff(path: impl AsRef<Path>) -> Result<GeoGrid> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut dec = Decoder::new(BufReader::new(file))
        .map_err(tiff_err)?
        .with_limits(Limits::unlimited());

    match dec.colortype().map_err(tiff_err)? {
        ColorType::Gray(_) => {}
        other => {
            return Err(Error::GeoTiff(format!(
                "only single-band rasters are supported, found {other:?}"
            )))
        }
    }
    let (width, height) = dec.dimensions().map_err(tiff_err)?;

    let scale = dec
        .find_tag(Tag::ModelPixelScaleTag)
        .map_err(tiff_err)?
        .ok_or_else(|| Error::GeoTiff("missing ModelPixelScale tag".into()))?
        .into_f64_vec()
        .map_err(tiff_err)?;
    let tie = dec
        .find_tag(Tag::ModelTiepointTag)
        .map_err(tiff_err)?
        .ok_or_else(|| Error::GeoTiff("missing ModelTiepoint tag".into()))?
        .into_f64_vec()
        .map_err(tiff_err)?;
    if scale.len() < 2 || tie.len() < 6 {
        return Err(Error::GeoTiff("malformed georeferencing tags".into()));
    }
    let (sx, sy) = (scale[0], scale[1]);
    if (sx - sy).abs() > 1e-9 * sx.abs().max(1.0) {
        return Err(Error::GeoTiff(format!(
            "non-square pixels ({sx} x {sy}) are not supported"
        )));
    }

    let keys = dec
        .find_tag(Tag::GeoKeyDirectoryTag)
        .map_err(tiff_err)?
        .map(|v| v.into_u16_vec())
        .transpose()
        .map_err(tiff_err)?
        .unwrap_or_default();
    let epsg = geo_key(&keys, PROJECTED_CS_TYPE)
        .or_else(|| geo_key(&keys, GEOGRAPHIC_TYPE))
        .unwrap_or(0) as u32;
    let half = if geo_key(&keys, RASTER_TYPE) == Some(RASTER_PIXEL_IS_POINT) {
        0.5
    } else {
        0.0
    };

    let origin_x = tie[3] - (tie[0] + half) * sx;
    let origin_y = tie[4] + (tie[1] + half) * sy;
    let spec = GridSpec::new(
        width as usize,
        height as usize,
        origin_x,
        origin_y,
        sx,
        epsg,
    )?;

    let nodata = match dec.find_tag(Tag::GdalNodata).map_err(tiff_err)? {
        Some(v) => {
            let text = v.into_string().map_err(tiff_err)?;
            let text = text.trim_matches(char::from(0)).trim();
            text.parse::<f64>()
                .map_err(|_| Error::GeoTiff(format!("unparseable nodata `{text}`")))?
                as f32
        }
        None => DEFAULT_NODATA,
    };

    let raw: Vec<f64> = match dec.read_image().map_err(tiff_err)? {
        DecodingResult::U8(v) => v.into_iter().map(f64::from).collect(),
        DecodingResult::U16(v) => v.into_iter().map(f64::from).collect(),
        DecodingResult::U32(v) => v.into_iter().map(f64::from).collect(),
        DecodingResult::I8(v) => v.into_iter().map(f64::from).collect(),
        DecodingResult::I16(v) => v.into_iter().map(f64::from).collect(),
        DecodingResult::I32(v) => v.into_iter().map(f64::from).collect(),
        DecodingResult::F32(v) => v.into_iter().map(f64::from).collect(),
        DecodingResult::F64(v) => v,
        _ => return Err(Error::GeoTiff("unsupported sample type".into())),
    };
    let values = raw
        .into_iter()
        .map(|v| {
            let v = v as f32;
            if v.is_finite() {
                v
            } else {
                nodata
            }
        })
        .collect();
    GeoGrid::new(spec, nodata, values)
}
