use std::collections::BTreeMap;
use std::path::Path;

use super::Predictor;
use crate::error::{Error, Result};
use crate::raster::{ensure_aligned, read_grid, GeoGrid};
use crate::workspace::{SceneStack, Workspace};

/// LST grids produced outside this system, keyed by scene id.
#[derive(Debug, Clone)]
pub struct ExternalPredictions {
    variant: String,
    grids: BTreeMap<String, GeoGrid>,
}

impl ExternalPredictions {
    pub fn from_grids(variant: impl Into<String>, grids: BTreeMap<String, GeoGrid>) -> Self {
        ExternalPredictions {
            variant: variant.into(),
            grids,
        }
    }

    pub fn scene_ids(&self) -> impl Iterator<Item = &str> {
        self.grids.keys().map(String::as_str)
    }

    pub fn grid(&self, scene_id: &str) -> Option<&GeoGrid> {
        self.grids.get(scene_id)
    }
}

impl Predictor for ExternalPredictions {
    fn identity(&self) -> &str {
        &self.variant
    }

    fn predict(&self, stack: &SceneStack) -> Result<GeoGrid> {
        if !stack.provenance.is_empty() {
            return Err(Error::Predictor {
                variant: self.variant.clone(),
                message: "external predictions exist only for unmodified scenes".into(),
            });
        }
        let g = self
            .grids
            .get(&stack.scene_id)
            .ok_or_else(|| Error::Predictor {
                variant: self.variant.clone(),
                message: format!("no prediction for scene {}", stack.scene_id),
            })?;
        ensure_aligned(stack, g)?;
        Ok(g.clone())
    }
}

/// Loads `<dir>/<scene_id>.grid` for every catalogued scene.
pub fn load_external_predictions(
    ws: &Workspace,
    variant: &str,
    dir: Option<&Path>,
) -> Result<ExternalPredictions> {
    let dir = dir
        .map(Path::to_path_buf)
        .unwrap_or_else(|| ws.predictions_dir(variant));
    if !dir.is_dir() {
        return Err(Error::Predictor {
            variant: variant.into(),
            message: format!("{} is not a directory", dir.display()),
        });
    }
    let mut grids = BTreeMap::new();
    for scene in &ws.scenes {
        let path = dir.join(format!("{}.grid", scene.scene_id));
        if !path.exists() {
            return Err(Error::Predictor {
                variant: variant.into(),
                message: format!("missing {}", path.display()),
            });
        }
        let g = read_grid(&path)?;
        ensure_aligned(ws.grid(), &g)?;
        grids.insert(scene.scene_id.clone(), g);
    }
    Ok(ExternalPredictions::from_grids(variant, grids))
}
