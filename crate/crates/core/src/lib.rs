//! Conditioning of deep random networks in the infinite-width limit.
//!
//! The crate computes dual activations from Hermite expansions, composes them
//! into limiting kernel and tangent-kernel matrices, and checks the resulting
//! spectra against closed-form depth bounds. Finite-width Monte Carlo
//! experiments and top-layer training routines measure the same quantities
//! on sampled networks.

// `!(x > 0.0)` is used throughout to reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod conditioning;
pub mod dual;
pub mod error;
pub mod hermite;
pub mod linalg;
pub mod montecarlo;
pub mod rng;
pub mod training;

pub use conditioning::{BoundParams, DepthProfile, GramMatrix, Spectrum};
pub use dual::{ActivationSpec, DualActivation, FixedPoint, NormTransferMap};
pub use error::{Error, Result};
pub use linalg::Matrix;
pub use montecarlo::{NetworkConfig, NetworkSample, TrialSummary};
pub use training::{RegressionProblem, TrainRun};
