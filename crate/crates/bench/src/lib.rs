//! Shared fixtures for the criterion benchmarks.

use fieldscan::{FieldDims, Generator, MultiField, ScanSpace, SimConfig};

/// The 50³, three-component, m = 5 reference configuration.
pub fn reference_sim(seed: u64) -> SimConfig {
    SimConfig {
        dims: FieldDims::new(vec![50, 50, 50], 3).expect("valid extents"),
        m: 5,
        sigma: 1.0,
        seed,
        anomaly: None,
    }
}

/// Cubes of side 30 with volume fraction in [0.05, 0.5].
pub fn reference_space() -> ScanSpace {
    ScanSpace::new(reference_sim(0).dims, 0.05, 0.5, Generator::Cubic(30)).expect("valid space")
}

pub fn reference_field(seed: u64) -> MultiField {
    fieldscan::generate(&reference_sim(seed)).expect("valid config")
}
