//! Land-cover semantics, park extraction and park distance fields.

mod components;
mod distance;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{GeoGrid, PixelMask, DEFAULT_NODATA};

pub use components::{label_components, Labeling};
pub use distance::{
    euclidean_distance, nearest_feature_transform, squared_distance, Direction, Nearest,
};

/// The closed set of land-cover classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LulcCategory {
    Water,
    Trees,
    FloodedVegetation,
    Crops,
    Built,
    BareGround,
    SnowIce,
    Clouds,
    Rangeland,
}

impl LulcCategory {
    pub const ALL: [LulcCategory; 9] = [
        LulcCategory::Water,
        LulcCategory::Trees,
        LulcCategory::FloodedVegetation,
        LulcCategory::Crops,
        LulcCategory::Built,
        LulcCategory::BareGround,
        LulcCategory::SnowIce,
        LulcCategory::Clouds,
        LulcCategory::Rangeland,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LulcCategory::Water => "water",
            LulcCategory::Trees => "trees",
            LulcCategory::FloodedVegetation => "flooded_vegetation",
            LulcCategory::Crops => "crops",
            LulcCategory::Built => "built",
            LulcCategory::BareGround => "bare_ground",
            LulcCategory::SnowIce => "snow_ice",
            LulcCategory::Clouds => "clouds",
            LulcCategory::Rangeland => "rangeland",
        }
    }
}

impl fmt::Display for LulcCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LulcCategory {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        LulcCategory::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown land-cover category `{s}`")))
    }
}

/// Mapping from categories to the integer codes used in LULC rasters.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(
    try_from = "BTreeMap<LulcCategory, i32>",
    into = "BTreeMap<LulcCategory, i32>"
)]
pub struct LulcLegend {
    codes: BTreeMap<LulcCategory, i32>,
}

impl Default for LulcLegend {
    /// Impact Observatory 9-class codes.
    fn default() -> Self {
        use LulcCategory::*;
        LulcLegend::new(BTreeMap::from([
            (Water, 1),
            (Trees, 2),
            (FloodedVegetation, 4),
            (Crops, 5),
            (Built, 7),
            (BareGround, 8),
            (SnowIce, 9),
            (Clouds, 10),
            (Rangeland, 11),
        ]))
        .expect("default codes are unique")
    }
}

impl TryFrom<BTreeMap<LulcCategory, i32>> for LulcLegend {
    type Error = Error;

    fn try_from(codes: BTreeMap<LulcCategory, i32>) -> Result<Self> {
        LulcLegend::new(codes)
    }
}

impl From<LulcLegend> for BTreeMap<LulcCategory, i32> {
    fn from(l: LulcLegend) -> Self {
        l.codes
    }
}

impl LulcLegend {
    pub fn new(codes: BTreeMap<LulcCategory, i32>) -> Result<Self> {
        let mut seen = std::collections::BTreeSet::new();
        for (cat, code) in &codes {
            if !seen.insert(*code) {
                return Err(Error::InvalidParameter(format!(
                    "land-cover code {code} assigned twice (at `{cat}`)"
                )));
            }
        }
        Ok(LulcLegend { codes })
    }

    pub fn code(&self, category: LulcCategory) -> Option<i32> {
        self.codes.get(&category).copied()
    }

    pub fn category(&self, code: i32) -> Option<LulcCategory> {
        self.codes
            .iter()
            .find(|(_, &c)| c == code)
            .map(|(&cat, _)| cat)
    }

    pub fn codes_for(&self, categories: &[LulcCategory]) -> Vec<f32> {
        categories
            .iter()
            .filter_map(|c| self.code(*c))
            .map(|c| c as f32)
            .collect()
    }

    pub fn require(&self, category: LulcCategory) -> Result<f32> {
        self.code(category)
            .map(|c| c as f32)
            .ok_or_else(|| Error::InvalidParameter(format!("legend has no code for `{category}`")))
    }
}

/// Pixels whose category code is in `codes`; nodata pixels are `false`.
pub fn category_mask(lulc: &GeoGrid, codes: &[f32]) -> PixelMask {
    PixelMask::new(
        *lulc.spec(),
        lulc.iter()
            .map(|v| v.is_some_and(|v| codes.contains(&v)))
            .collect(),
    )
    .expect("geometry taken from a valid grid")
}

/// Built-up membership per pixel.
pub fn built_mask(lulc: &GeoGrid, built_codes: &[f32]) -> PixelMask {
    category_mask(lulc, built_codes)
}

/// Parks as labelled 8-connected green components.
#[derive(Debug, Clone, PartialEq)]
pub struct ParkSet {
    /// Component id per pixel, 0 where not a park.
    pub labels: Vec<u32>,
    /// Area in m² per component id.
    pub park_areas: BTreeMap<u32, f64>,
    /// Green pixels before the area filter.
    pub source_mask: PixelMask,
}

impl ParkSet {
    pub fn count(&self) -> usize {
        self.park_areas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.park_areas.is_empty()
    }

    pub fn mask(&self) -> PixelMask {
        PixelMask::new(
            *self.source_mask.spec(),
            self.labels.iter().map(|&l| l != 0).collect(),
        )
        .expect("labels share the source geometry")
    }

    /// Component ids as a grid (0 outside parks).
    pub fn label_grid(&self) -> GeoGrid {
        GeoGrid::new(
            *self.source_mask.spec(),
            DEFAULT_NODATA,
            self.labels.iter().map(|&l| l as f32).collect(),
        )
        .expect("labels share the source geometry")
    }

    /// Builds a park set from an arbitrary green mask (used for hypothetical parks).
    pub fn from_mask(mask: &PixelMask, min_area: f64) -> ParkSet {
        let spec = *mask.spec();
        let labeling = label_components(mask.values(), spec.width, spec.height);
        let area_px = spec.pixel_area();
        let mut remap = vec![0u32; labeling.count as usize + 1];
        let mut park_areas = BTreeMap::new();
        let mut next = 0u32;
        for (id, &size) in labeling.sizes.iter().enumerate().skip(1) {
            let area = size as f64 * area_px;
            if area >= min_area {
                next += 1;
                remap[id] = next;
                park_areas.insert(next, area);
            }
        }
        ParkSet {
            labels: labeling.labels.iter().map(|&l| remap[l as usize]).collect(),
            park_areas,
            source_mask: mask.clone(),
        }
    }
}

/// Extracts parks: 8-connected components of `green_codes` pixels with at
/// least `min_area` m². Ids follow raster scan order of each component's
/// first pixel.
pub fn extract_parks(lulc: &GeoGrid, green_codes: &[f32], min_area: f64) -> ParkSet {
    ParkSet::from_mask(&category_mask(lulc, green_codes), min_area)
}

/// Inside/outside distances to park edges plus the nearest park per pixel.
#[derive(Debug, Clone)]
pub struct DistanceField {
    /// Park pixels: metres to the nearest non-park pixel centre.
    pub inside: GeoGrid,
    /// Non-park pixels: metres to the nearest park pixel centre.
    pub outside: GeoGrid,
    /// Label of the nearest park for non-park pixels, own label for park pixels.
    pub nearest_park: Vec<u32>,
}

impl DistanceField {
    pub fn from_parks(parks: &ParkSet) -> Result<DistanceField> {
        let mask = parks.mask();
        let inside = euclidean_distance(&mask, Direction::Inside)?;
        let spec = mask.spec();
        let nearest = nearest_feature_transform(mask.values(), spec.width, spec.height)
            .expect("mask checked non-empty by the inside transform");
        let px = spec.pixel_size;
        let mut outside = Vec::with_capacity(spec.len());
        let mut nearest_park = Vec::with_capacity(spec.len());
        for (i, n) in nearest.iter().enumerate() {
            if parks.labels[i] != 0 {
                outside.push(DEFAULT_NODATA);
                nearest_park.push(parks.labels[i]);
            } else {
                outside.push(((n.dist_sq as f64).sqrt() * px) as f32);
                nearest_park.push(parks.labels[n.feature]);
            }
        }
        Ok(DistanceField {
            inside,
            outside: GeoGrid::new(*spec, DEFAULT_NODATA, outside)?,
            nearest_park,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::GridSpec;

    const TREES: f32 = 2.0;
    const BUILT: f32 = 7.0;

    fn grid(w: usize, h: usize, f: impl Fn(usize, usize) -> f32) -> GeoGrid {
        let spec = GridSpec::new(w, h, 0.0, 0.0, 30.0, 32633).unwrap();
        GeoGrid::from_fn(spec, DEFAULT_NODATA, |c, r| Some(f(c, r))).unwrap()
    }

    #[test]
    fn legend_round_trip_and_duplicates() {
        let l = LulcLegend::default();
        assert_eq!(l.code(LulcCategory::Trees), Some(2));
        assert_eq!(l.category(7), Some(LulcCategory::Built));
        let json = serde_json::to_string(&l).unwrap();
        assert!(json.contains("\"trees\":2"));
        assert_eq!(serde_json::from_str::<LulcLegend>(&json).unwrap(), l);
        assert!(serde_json::from_str::<LulcLegend>(r#"{"trees":2,"built":2}"#).is_err());
        assert!("forest".parse::<LulcCategory>().is_err());
    }

    #[test]
    fn four_by_four_block_is_one_hectare_park() {
        let lulc = grid(8, 8, |c, r| {
            if (2..6).contains(&c) && (2..6).contains(&r) {
                TREES
            } else {
                BUILT
            }
        });
        let parks = extract_parks(&lulc, &[TREES], 10_000.0);
        assert_eq!(parks.count(), 1);
        assert_eq!(parks.park_areas[&1], 14_400.0);
        let small = extract_parks(&lulc, &[TREES], 15_000.0);
        assert!(small.is_empty());
    }

    #[test]
    fn diagonal_touch_is_one_component() {
        let lulc = grid(6, 6, |c, r| {
            if (c < 2 && r < 2) || ((2..4).contains(&c) && (2..4).contains(&r)) {
                TREES
            } else {
                BUILT
            }
        });
        let parks = extract_parks(&lulc, &[TREES], 0.0);
        assert_eq!(parks.count(), 1);
        assert_eq!(parks.park_areas[&1], 8.0 * 900.0);
    }

    #[test]
    fn built_mask_membership() {
        let all = grid(3, 3, |_, _| BUILT);
        assert!(built_mask(&all, &[BUILT]).all());
        let none = grid(3, 3, |_, _| TREES);
        assert!(!built_mask(&none, &[BUILT]).any());
        let mixed = grid(5, 4, |c, r| {
            [BUILT, TREES, 1.0, DEFAULT_NODATA][(c + r) % 4]
        });
        let m = built_mask(&mixed, &[BUILT, 1.0]);
        for (i, v) in mixed.values().iter().enumerate() {
            assert_eq!(m.at(i), *v == BUILT || *v == 1.0);
        }
    }

    #[test]
    fn every_park_touches_its_boundary() {
        let lulc = grid(20, 20, |c, r| {
            let a = (3..10).contains(&c) && (2..12).contains(&r);
            let b = (13..19).contains(&c) && (10..17).contains(&r);
            if a || b {
                TREES
            } else {
                BUILT
            }
        });
        let parks = extract_parks(&lulc, &[TREES], 0.0);
        let field = DistanceField::from_parks(&parks).unwrap();
        for id in parks.park_areas.keys() {
            let min = parks
                .labels
                .iter()
                .enumerate()
                .filter(|(_, &l)| l == *id)
                .map(|(i, _)| field.inside.at(i).unwrap())
                .fold(f32::INFINITY, f32::min);
            assert_eq!(min, 30.0);
        }
        // nearest park label agrees with the closer block
        assert_eq!(field.nearest_park[0], 1);
        assert_eq!(field.nearest_park[19 * 20 + 19], 2);
    }
}
