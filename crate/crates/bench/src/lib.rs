//! Fixtures shared by the benchmarks.

use depthcond::conditioning::{synthetic_inputs, SyntheticInputs};
use depthcond::{DualActivation, NetworkConfig};

/// Activation used throughout the benchmarks.
pub const ACTIVATION: &str = "relu-normalized";

pub fn dual() -> DualActivation {
    DualActivation::builtin(ACTIVATION).expect("registry activation")
}

/// `n` unit inputs with minimum separation 0.2.
pub fn inputs(n: usize) -> SyntheticInputs {
    synthetic_inputs(n, 0.2, 1).expect("valid fixture")
}

pub fn network(input_dim: usize, width: usize, depth: usize) -> NetworkConfig {
    let spec = dual().spec().clone();
    NetworkConfig::new(input_dim, width, depth, spec, 3)
}
