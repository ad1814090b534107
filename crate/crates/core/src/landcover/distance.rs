//! Exact Euclidean distance transform.
//!
//! Separable lower-envelope algorithm (Felzenszwalb & Huttenlocher) on
//! integer squared distances, extended to carry the index of the nearest
//! feature pixel. Results are exact: squared distances are integers and
//! the envelope intersections are evaluated in `f64` on integer inputs.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::raster::{GeoGrid, PixelMask, DEFAULT_NODATA};

/// Which side of the mask a distance is measured from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// Mask pixels, distance to the nearest non-mask pixel centre.
    Inside,
    /// Non-mask pixels, distance to the nearest mask pixel centre.
    Outside,
}

/// Squared pixel distance to, and flat index of, the nearest feature pixel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Nearest {
    pub dist_sq: u64,
    pub feature: usize,
}

const NONE: usize = usize::MAX;

/// Nearest feature pixel for every pixel of a `width × height` grid.
///
/// Returns `None` when `features` has no `true` entry. Ties between
/// equidistant features resolve deterministically.
pub fn nearest_feature_transform(
    features: &[bool],
    width: usize,
    height: usize,
) -> Option<Vec<Nearest>> {
    assert_eq!(features.len(), width * height);
    if !features.iter().any(|&f| f) {
        return None;
    }

    // Column pass: nearest feature row within each column.
    let mut col_row = vec![NONE; width * height];
    let columns: Vec<Vec<usize>> = (0..width)
        .into_par_iter()
        .map(|col| {
            let mut out = vec![NONE; height];
            let mut last = NONE;
            for row in 0..height {
                if features[row * width + col] {
                    last = row;
                }
                out[row] = last;
            }
            let mut next = NONE;
            for row in (0..height).rev() {
                if features[row * width + col] {
                    next = row;
                }
                if next != NONE && (out[row] == NONE || next - row < row - out[row]) {
                    out[row] = next;
                }
            }
            out
        })
        .collect();
    for (col, rows) in columns.iter().enumerate() {
        for (row, &r) in rows.iter().enumerate() {
            col_row[row * width + col] = r;
        }
    }

    // Row pass: lower envelope of parabolas (x - q)^2 + f(q).
    let mut result = vec![
        Nearest {
            dist_sq: 0,
            feature: 0
        };
        width * height
    ];
    result
        .par_chunks_mut(width)
        .enumerate()
        .for_each(|(row, out)| {
            let f: Vec<Option<u64>> = (0..width)
                .map(|q| {
                    let r = col_row[row * width + q];
                    (r != NONE).then(|| {
                        let dy = r.abs_diff(row) as u64;
                        dy * dy
                    })
                })
                .collect();
            let sites: Vec<usize> = (0..width).filter(|&q| f[q].is_some()).collect();
            let fq = |q: usize| f[q].unwrap() as f64;
            let mut v: Vec<usize> = Vec::with_capacity(sites.len());
            let mut z: Vec<f64> = Vec::with_capacity(sites.len() + 1);
            for &q in &sites {
                loop {
                    match v.last() {
                        None => {
                            v.push(q);
                            z.clear();
                            z.push(f64::NEG_INFINITY);
                            break;
                        }
                        Some(&p) => {
                            let s = ((fq(q) + (q * q) as f64) - (fq(p) + (p * p) as f64))
                                / (2.0 * (q as f64 - p as f64));
                            if s <= *z.last().unwrap() {
                                v.pop();
                                z.pop();
                            } else {
                                v.push(q);
                                z.push(s);
                                break;
                            }
                        }
                    }
                }
            }
            let mut k = 0;
            for (x, slot) in out.iter_mut().enumerate() {
                while k + 1 < v.len() && z[k + 1] < x as f64 {
                    k += 1;
                }
                let q = v[k];
                let dx = x.abs_diff(q) as u64;
                let dist_sq = dx * dx + f[q].unwrap();
                *slot = Nearest {
                    dist_sq,
                    feature: col_row[row * width + q] * width + q,
                };
            }
        });
    Some(result)
}

/// Exact squared pixel distances for the requested direction; `None` on
/// pixels outside the measured side.
pub fn squared_distance(mask: &PixelMask, direction: Direction) -> Result<Vec<Option<u64>>> {
    let spec = mask.spec();
    let values = mask.values();
    if !mask.any() || mask.all() {
        return Err(Error::DegenerateMask(format!(
            "{:?} distance needs both mask and non-mask pixels",
            direction
        )));
    }
    let features: Vec<bool> = match direction {
        Direction::Inside => values.iter().map(|&m| !m).collect(),
        Direction::Outside => values.to_vec(),
    };
    let nearest = nearest_feature_transform(&features, spec.width, spec.height)
        .expect("features checked non-empty");
    Ok(nearest
        .iter()
        .zip(&features)
        .map(|(n, &is_feature)| (!is_feature).then_some(n.dist_sq))
        .collect())
}

/// Distance in metres between pixel centres, per the inside/outside
/// convention; pixels on the other side are nodata.
pub fn euclidean_distance(mask: &PixelMask, direction: Direction) -> Result<GeoGrid> {
    let px = mask.spec().pixel_size;
    let sq = squared_distance(mask, direction)?;
    let values = sq
        .iter()
        .map(|d| match d {
            Some(d) => ((*d as f64).sqrt() * px) as f32,
            None => DEFAULT_NODATA,
        })
        .collect();
    GeoGrid::new(*mask.spec(), DEFAULT_NODATA, values)
}
