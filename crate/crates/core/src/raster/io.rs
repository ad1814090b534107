//! Portable grid format: `name.grid` holds little-endian `f32` values in
//! row-major order, `name.grid.json` holds the geometry and metadata.

use std::fs;
use std::path::{Path, PathBuf};

use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};

use super::{GeoGrid, GridSpec};
use crate::error::{Error, Result};

/// JSON sidecar contents. A `null` nodata stands for NaN.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridHeader {
    pub width: usize,
    pub height: usize,
    pub origin_x: f64,
    pub origin_y: f64,
    pub pixel_size: f64,
    pub epsg: u32,
    pub nodata: Option<f32>,
    #[serde(default)]
    pub band: Option<String>,
    #[serde(default)]
    pub timestamp: Option<String>,
}

impl GridHeader {
    pub fn spec(&self) -> GridSpec {
        GridSpec {
            width: self.width,
            height: self.height,
            origin_x: self.origin_x,
            origin_y: self.origin_y,
            pixel_size: self.pixel_size,
            crs_code: self.epsg,
        }
    }

    pub fn nodata_value(&self) -> f32 {
        self.nodata.unwrap_or(f32::NAN)
    }

    pub fn parsed_timestamp(&self) -> std::result::Result<Option<DateTime<Utc>>, String> {
        self.timestamp
            .as_deref()
            .map(|t| {
                DateTime::parse_from_rfc3339(t)
                    .map(|d| d.with_timezone(&Utc))
                    .map_err(|e| format!("bad timestamp `{t}`: {e}"))
            })
            .transpose()
    }
}

/// `foo.grid` → `foo.grid.json`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

pub fn write_grid(path: impl AsRef<Path>, grid: &GeoGrid) -> Result<()> {
    let path = path.as_ref();
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let spec = grid.spec();
    let nodata = grid.nodata();
    let header = GridHeader {
        width: spec.width,
        height: spec.height,
        origin_x: spec.origin_x,
        origin_y: spec.origin_y,
        pixel_size: spec.pixel_size,
        epsg: spec.crs_code,
        nodata: (!nodata.is_nan()).then_some(nodata),
        band: grid.band.clone(),
        timestamp: grid
            .timestamp
            .map(|t| t.to_rfc3339_opts(SecondsFormat::Secs, true)),
    };
    let mut payload = Vec::with_capacity(grid.values().len() * 4);
    for v in grid.values() {
        payload.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, payload).map_err(|e| Error::io(path, e))?;
    let sidecar = sidecar_path(path);
    let json = serde_json::to_string_pretty(&header)?;
    fs::write(&sidecar, json + "\n").map_err(|e| Error::io(&sidecar, e))?;
    Ok(())
}

pub fn read_grid_header(path: impl AsRef<Path>) -> Result<GridHeader> {
    let sidecar = sidecar_path(path.as_ref());
    let text = fs::read_to_string(&sidecar).map_err(|e| Error::io(&sidecar, e))?;
    let header: GridHeader = serde_json::from_str(&text).map_err(|e| Error::Sidecar {
        path: sidecar.clone(),
        message: e.to_string(),
    })?;
    header.spec().validate().map_err(|e| Error::Sidecar {
        path: sidecar.clone(),
        message: e.to_string(),
    })?;
    Ok(header)
}

pub fn read_grid(path: impl AsRef<Path>) -> Result<GeoGrid> {
    let path = path.as_ref();
    let header = read_grid_header(path)?;
    let timestamp = header
        .parsed_timestamp()
        .map_err(|message| Error::Sidecar {
            path: sidecar_path(path),
            message,
        })?;
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let spec = header.spec();
    if bytes.len() != spec.len() * 4 {
        return Err(Error::InvalidGrid(format!(
            "{}: payload has {} bytes, expected {}",
            path.display(),
            bytes.len(),
            spec.len() * 4
        )));
    }
    let values = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    let mut grid = GeoGrid::new(spec, header.nodata_value(), values)?;
    grid.band = header.band;
    grid.timestamp = timestamp;
    Ok(grid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    #[test]
    fn round_trip_with_metadata() {
        let dir = tempfile::tempdir().unwrap();
        let spec = GridSpec::new(3, 2, 10.0, 20.0, 30.0, 32635).unwrap();
        let g = GeoGrid::new(spec, -9999.0, vec![1.5, -9999.0, 0.0, -0.0, 1e-30, 3.25])
            .unwrap()
            .with_band("red")
            .with_timestamp(Some(Utc.with_ymd_and_hms(2021, 7, 3, 9, 45, 0).unwrap()));
        let path = dir.path().join("sub/red.grid");
        write_grid(&path, &g).unwrap();
        let back = read_grid(&path).unwrap();
        assert_eq!(back.band.as_deref(), Some("red"));
        assert_eq!(back.timestamp, g.timestamp);
        let bits = |g: &GeoGrid| g.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&back), bits(&g));
        let sidecar = fs::read_to_string(sidecar_path(&path)).unwrap();
        for key in [
            "width",
            "height",
            "origin_x",
            "origin_y",
            "pixel_size",
            "epsg",
            "nodata",
            "band",
            "timestamp",
        ] {
            assert!(sidecar.contains(&format!("\"{key}\"")), "missing {key}");
        }
        assert!(sidecar.contains("2021-07-03T09:45:00Z"));
    }

    #[test]
    fn nan_nodata_round_trips_as_null() {
        let dir = tempfile::tempdir().unwrap();
        let spec = GridSpec::new(2, 1, 0.0, 0.0, 30.0, 1).unwrap();
        let g = GeoGrid::new(spec, f32::NAN, vec![f32::NAN, 2.0]).unwrap();
        let path = dir.path().join("x.grid");
        write_grid(&path, &g).unwrap();
        assert!(fs::read_to_string(sidecar_path(&path))
            .unwrap()
            .contains("null"));
        let back = read_grid(&path).unwrap();
        assert!(back.nodata().is_nan());
        assert_eq!(back.at(0), None);
        assert_eq!(back.at(1), Some(2.0));
    }

    #[test]
    fn truncated_payload_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let spec = GridSpec::new(2, 2, 0.0, 0.0, 30.0, 1).unwrap();
        let path = dir.path().join("x.grid");
        write_grid(&path, &GeoGrid::filled(spec, 1.0, -1.0).unwrap()).unwrap();
        fs::write(&path, [0u8; 12]).unwrap();
        assert!(read_grid(&path).is_err());
        assert!(read_grid(dir.path().join("missing.grid")).is_err());
    }
}
