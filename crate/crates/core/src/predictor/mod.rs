//! The predictor contract and its providers.

mod external;
mod linear;
mod oracle;
mod synthetic;

use crate::error::Result;
use crate::raster::GeoGrid;
use crate::workspace::SceneStack;

pub use external::{load_external_predictions, ExternalPredictions};
pub use linear::{
    fit_baseline, AlbedoWeights, FeatureStack, LinearLstModel, NormalEquations,
    MIN_PIXELS_PER_FEATURE, RIDGE_LAMBDA,
};
pub use oracle::OraclePredictor;
pub use synthetic::{
    generate_synthetic_city, write_synthetic_workspace, ParkRect, SyntheticScene, SyntheticWorld,
    SyntheticWorldSpec, URBAN_FORM_PATH, WORLD_SPEC_PATH,
};

/// Maps a scene stack to an LST field in °C on the same grid.
///
/// Implementations return nodata wherever any input they use is nodata.
pub trait Predictor: Send + Sync {
    /// Variant label, e.g. `baseline`, `oracle`, `V1`.
    fn identity(&self) -> &str;

    fn predict(&self, stack: &SceneStack) -> Result<GeoGrid>;
}

impl<P: Predictor + ?Sized> Predictor for Box<P> {
    fn identity(&self) -> &str {
        (**self).identity()
    }

    fn predict(&self, stack: &SceneStack) -> Result<GeoGrid> {
        (**self).predict(stack)
    }
}

impl<P: Predictor + ?Sized> Predictor for std::sync::Arc<P> {
    fn identity(&self) -> &str {
        (**self).identity()
    }

    fn predict(&self, stack: &SceneStack) -> Result<GeoGrid> {
        (**self).predict(stack)
    }
}
