use std::path::Path;

use super::synthetic::{SyntheticWorld, SyntheticWorldSpec, URBAN_FORM_PATH, WORLD_SPEC_PATH};
use super::Predictor;
use crate::error::{Error, Result};
use crate::landcover::{DistanceField, ParkSet};
use crate::raster::{ensure_aligned, read_grid, GeoGrid, PixelMask};
use crate::spectral::ndvi;
use crate::workspace::{SceneStack, AIRTEMP};

/// NDVI at or above this marks a pixel as green for the oracle.
pub const ORACLE_GREEN_NDVI: f32 = 0.7;

/// Knows the synthetic world's hidden parameters. Parks are re-derived from
/// the stack's reflectance, so edited stacks (inpainted parks) are honoured.
#[derive(Debug, Clone)]
pub struct OraclePredictor {
    spec: SyntheticWorldSpec,
    urban_form: GeoGrid,
    min_area: f64,
}

impl OraclePredictor {
    pub fn new(spec: SyntheticWorldSpec, urban_form: GeoGrid, min_area: f64) -> Self {
        OraclePredictor {
            spec,
            urban_form,
            min_area,
        }
    }

    pub fn from_world(world: &SyntheticWorld, min_area: f64) -> Self {
        Self::new(world.spec.clone(), world.urban_form.clone(), min_area)
    }

    /// Loads the hidden parameters written next to a synthetic workspace.
    pub fn load(root: &Path, min_area: f64) -> Result<Self> {
        let path = root.join(WORLD_SPEC_PATH);
        if !path.exists() {
            return Err(Error::Predictor {
                variant: "oracle".into(),
                message: "workspace has no synthetic world parameters".into(),
            });
        }
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let spec: SyntheticWorldSpec = serde_json::from_str(&text).map_err(|e| Error::Sidecar {
            path: path.clone(),
            message: e.to_string(),
        })?;
        let urban_form = read_grid(root.join(URBAN_FORM_PATH))?;
        Ok(Self::new(spec, urban_form, min_area))
    }

    pub fn world_spec(&self) -> &SyntheticWorldSpec {
        &self.spec
    }
}

impl Predictor for OraclePredictor {
    fn identity(&self) -> &str {
        "oracle"
    }

    fn predict(&self, stack: &SceneStack) -> Result<GeoGrid> {
        ensure_aligned(stack, &self.urban_form)?;
        let v = ndvi(stack.channel("nir")?, stack.channel("red")?)?;
        let spec = *stack.spec();
        let green = PixelMask::new(
            spec,
            v.iter()
                .map(|x| x.is_some_and(|x| x >= ORACLE_GREEN_NDVI))
                .collect(),
        )?;
        let parks = ParkSet::from_mask(&green, self.min_area);
        let park_mask = parks.mask();
        let field = if park_mask.any() && !park_mask.all() {
            Some(DistanceField::from_parks(&parks)?)
        } else {
            None
        };
        let air = stack.channel(AIRTEMP)?;
        let values: Vec<Option<f32>> = (0..spec.len())
            .map(|i| {
                let a = air.at(i)? as f64;
                v.at(i)?;
                let bf = self.urban_form.at(i)? as f64;
                let (inside, outside) = match &field {
                    Some(f) if park_mask.at(i) => (f.inside.at(i).map(f64::from), None),
                    Some(f) => (None, f.outside.at(i).map(f64::from)),
                    // a grid that is all park saturates; one with no park has no cooling
                    None if park_mask.at(i) => (Some(f64::INFINITY), None),
                    None => (None, None),
                };
                Some(self.spec.planted_lst(a, bf, inside, outside) as f32)
            })
            .collect();
        Ok(GeoGrid::from_options(spec, air.nodata(), &values)?
            .with_band("lst")
            .with_timestamp(Some(stack.timestamp)))
    }
}
