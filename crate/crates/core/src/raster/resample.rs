use super::{GeoGrid, GridSpec};
use crate::error::{Error, Result};

const RATIO_EPS: f64 = 1e-9;

fn integer_ratio(value: f64, what: &str) -> Result<i64> {
    let rounded = value.round();
    if (value - rounded).abs() > RATIO_EPS * value.abs().max(1.0) {
        return Err(Error::Resample(format!("{what} {value} is not an integer")));
    }
    Ok(rounded as i64)
}

/// Coarsens a categorical grid onto `target` by per-block majority vote.
///
/// `target.pixel_size` must be an integer multiple `k` of the source pixel
/// size and the two grids must share pixel boundaries. Each target pixel
/// takes the most frequent code among its `k×k` source pixels; nodata and
/// out-of-extent source pixels do not vote, ties go to the lowest code, and
/// a block without votes becomes nodata.
pub fn resample_majority(src: &GeoGrid, target: &GridSpec) -> Result<GeoGrid> {
    target.validate()?;
    let s = src.spec();
    if s.crs_code != target.crs_code {
        return Err(Error::Resample(format!(
            "CRS mismatch: EPSG:{} vs EPSG:{}",
            s.crs_code, target.crs_code
        )));
    }
    let k = integer_ratio(target.pixel_size / s.pixel_size, "resolution ratio")?;
    if k < 1 {
        return Err(Error::Resample(
            "target pixel size is finer than the source".into(),
        ));
    }
    let k = k as usize;
    let col0 = integer_ratio(
        (target.origin_x - s.origin_x) / s.pixel_size,
        "column offset",
    )?;
    let row0 = integer_ratio((s.origin_y - target.origin_y) / s.pixel_size, "row offset")?;

    let tw = (target.width * k) as i64;
    let th = (target.height * k) as i64;
    if col0 >= s.width as i64 || row0 >= s.height as i64 || col0 + tw <= 0 || row0 + th <= 0 {
        return Err(Error::Resample(
            "source and target extents are disjoint".into(),
        ));
    }

    let nodata = src.nodata();
    let mut votes: Vec<f32> = Vec::with_capacity(k * k);
    let mut out = Vec::with_capacity(target.len());
    for trow in 0..target.height {
        for tcol in 0..target.width {
            votes.clear();
            for dy in 0..k {
                let r = row0 + (trow * k + dy) as i64;
                if r < 0 || r >= s.height as i64 {
                    continue;
                }
                for dx in 0..k {
                    let c = col0 + (tcol * k + dx) as i64;
                    if c < 0 || c >= s.width as i64 {
                        continue;
                    }
                    if let Some(v) = src.get(c as usize, r as usize) {
                        votes.push(v);
                    }
                }
            }
            out.push(majority(&mut votes).unwrap_or(nodata));
        }
    }
    let mut grid = GeoGrid::new(*target, nodata, out)?;
    grid.band = src.band.clone();
    grid.timestamp = src.timestamp;
    Ok(grid)
}

/// Most frequent value; the lowest value wins ties.
fn majority(votes: &mut [f32]) -> Option<f32> {
    votes.sort_by(f32::total_cmp);
    let mut best: Option<(f32, usize)> = None;
    let mut i = 0;
    while i < votes.len() {
        let v = votes[i];
        let mut j = i;
        while j < votes.len() && votes[j] == v {
            j += 1;
        }
        let run = j - i;
        if best.is_none_or(|(_, n)| run > n) {
            best = Some((v, run));
        }
        i = j;
    }
    best.map(|(v, _)| v)
}
