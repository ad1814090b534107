//! Benchmark fixtures shared by the criterion targets.

use heatlab_core::predictor::{generate_synthetic_city, SyntheticWorld, SyntheticWorldSpec};

/// Default synthetic city at the given side length.
pub fn world(size: usize) -> SyntheticWorld {
    let spec = SyntheticWorldSpec {
        size,
        scene_count: 2,
        ..Default::default()
    };
    generate_synthetic_city(&spec).expect("default world parameters are valid")
}
