pub mod climate;
pub mod config;
pub mod cooling;
pub mod error;
pub mod eval;
pub mod intervention;
pub mod landcover;
pub mod pipeline;
pub mod predictor;
pub mod raster;
pub mod render;
pub mod spectral;
pub mod stats;
pub mod workspace;

pub use error::{Error, ErrorClass, Result};
