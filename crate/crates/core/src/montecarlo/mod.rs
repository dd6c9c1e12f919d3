//! Finite-width networks with i.i.d. standard normal weights, and
//! experiments comparing their kernels with the infinite-width limits.

mod experiments;
mod network;
mod ntk;

pub use experiments::{
    bn_invariance_check, correlation_decay_experiment, kernel_concentration, min_singular_value,
    one_layer_min_singular_experiment, BnReport, ConcentrationReport, DecayReport, KernelKind, SigmaMinReport,
};
pub use network::{
    feature_map, project_unit, sample_network, sample_network_trial, NetworkConfig, NetworkSample, MAX_WIDTH, UNIT_TOLERANCE,
    WEIGHT_BUDGET,
};
pub use ntk::empirical_ntk;

use crate::conditioning::GramMatrix;
use crate::error::Result;
use crate::linalg::{dot, Matrix};
use rayon::prelude::*;
use serde::Serialize;

/// Mean and standard error of a scalar observable over independent trials.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TrialSummary {
    pub mean: f64,
    /// Sample standard deviation over `√trials`; NaN for a single trial.
    pub std_error: f64,
    pub trials: usize,
}

impl TrialSummary {
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let std_error = if n > 1 {
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        } else {
            f64::NAN
        };
        Self { mean, std_error, trials: n }
    }

    /// `|mean − target|` in standard errors.
    pub fn z_score(&self, target: f64) -> f64 {
        (self.mean - target).abs() / self.std_error
    }
}

/// Gram matrix of the layer-`L` features of `xs`.
pub fn empirical_kernel(net: &NetworkSample, xs: &[Vec<f64>]) -> Result<GramMatrix> {
    let feats = xs.par_iter().map(|x| feature_map(net, x)).collect::<Result<Vec<_>>>()?;
    GramMatrix::new(symmetric_gram(&feats, |a, b| dot(a, b)))
}

/// Fills the upper triangle with `f` and mirrors it, so the result is
/// exactly symmetric.
pub(crate) fn symmetric_gram<T>(items: &[T], f: impl Fn(&T, &T) -> f64) -> Matrix {
    let n = items.len();
    let mut m = Matrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = f(&items[i], &items[j]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    m
}
