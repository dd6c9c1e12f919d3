use crate::dual::ActivationSpec;
use crate::error::{domain, Error, Result};
use crate::linalg::{dot, norm, Matrix};
use crate::rng;
use rayon::prelude::*;

/// Largest number of weights a single sample may hold (1 GiB of `f64`).
pub const WEIGHT_BUDGET: usize = 1 << 27;

/// Widest supported layer.
pub const MAX_WIDTH: usize = 1 << 16;

/// Tolerance on `‖x‖ = 1` for inputs to unit-norm networks.
const UNIT_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct NetworkConfig {
    pub input_dim: usize,
    pub width: usize,
    pub depth: usize,
    pub activation: ActivationSpec,
    /// Project every layer's output onto the unit sphere.
    pub normalize_layers: bool,
    pub seed: u64,
}

impl NetworkConfig {
    pub fn new(input_dim: usize, width: usize, depth: usize, activation: ActivationSpec, seed: u64) -> Self {
        Self { input_dim, width, depth, activation, normalize_layers: false, seed }
    }

    pub fn with_layer_normalization(mut self, on: bool) -> Self {
        self.normalize_layers = on;
        self
    }

    /// Total number of weights, including the output vector.
    pub fn parameter_count(&self) -> usize {
        let (d, m) = (self.input_dim, self.width);
        if self.depth == 0 {
            return d;
        }
        m.saturating_mul(d)
            .saturating_add(m.saturating_mul(m).saturating_mul(self.depth - 1))
            .saturating_add(m)
    }

    /// Checks sizes, without the memory budget.
    pub fn validate_shape(&self) -> Result<()> {
        if self.input_dim == 0 || self.width == 0 {
            return Err(domain("input dimension and width must be positive"));
        }
        if self.width > MAX_WIDTH {
            return Err(domain(format!("width {} exceeds {MAX_WIDTH}", self.width)));
        }
        Ok(())
    }

    /// Checks sizes and that a full sample fits in [`WEIGHT_BUDGET`].
    pub fn validate(&self) -> Result<()> {
        self.validate_shape()?;
        let count = self.parameter_count();
        if count > WEIGHT_BUDGET {
            return Err(Error::Resource(format!(
                "{count} weights requested; the budget is {WEIGHT_BUDGET}"
            )));
        }
        Ok(())
    }
}

/// Weights of one network draw. `layers[h]` maps layer `h` to `h + 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkSample {
    pub(crate) config: NetworkConfig,
    pub(crate) trial: u64,
    pub(crate) layers: Vec<Matrix>,
    pub(crate) output: Vec<f64>,
}

impl NetworkSample {
    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn trial(&self) -> u64 {
        self.trial
    }

    pub fn layers(&self) -> &[Matrix] {
        &self.layers
    }

    /// The output weights `v`.
    pub fn output_weights(&self) -> &[f64] {
        &self.output
    }

    /// `f(x) = v · Φ(x)`.
    pub fn output(&self, x: &[f64]) -> Result<f64> {
        Ok(dot(&self.output, &feature_map(self, x)?))
    }
}

pub fn sample_network(cfg: &NetworkConfig) -> Result<NetworkSample> {
    sample_network_trial(cfg, 0)
}

/// Draws the network for trial `trial`. Row `r` of layer `h` comes from its
/// own stream, so the draw does not depend on thread count or on the sizes
/// of other layers.
pub fn sample_network_trial(cfg: &NetworkConfig, trial: u64) -> Result<NetworkSample> {
    cfg.validate()?;
    let (d, m) = (cfg.input_dim, cfg.width);
    let mut layers = Vec::with_capacity(cfg.depth);
    for h in 1..=cfg.depth {
        let cols = if h == 1 { d } else { m };
        let mut data = vec![0.0; m * cols];
        data.par_chunks_mut(cols).enumerate().for_each(|(r, row)| {
            rng::fill_normal(cfg.seed, &[rng::domain::WEIGHTS, trial, h as u64], r as u64, row);
        });
        layers.push(Matrix::from_vec(m, cols, data)?);
    }
    let out_dim = if cfg.depth == 0 { d } else { m };
    let mut output = vec![0.0; out_dim];
    rng::fill_normal(cfg.seed, &[rng::domain::WEIGHTS, trial, cfg.depth as u64 + 1], 0, &mut output);
    Ok(NetworkSample { config: cfg.clone(), trial, layers, output })
}

/// Vectors whose norm is within this of one are left unchanged by [`project_unit`].
pub const UNIT_TOLERANCE: f64 = 1e-12;

/// `v/‖v‖`. Inputs already within [`UNIT_TOLERANCE`] of the sphere are
/// returned as they are, and every output is within it, so projecting twice
/// gives bit-identical output.
pub fn project_unit(v: &[f64]) -> Result<Vec<f64>> {
    let mut u = v.to_vec();
    for _ in 0..4 {
        let n = norm(&u);
        if !(n > 0.0 && n.is_finite()) {
            return Err(Error::Precondition("a layer output vanished before projection".into()));
        }
        if (n - 1.0).abs() <= UNIT_TOLERANCE {
            return Ok(u);
        }
        u.iter_mut().for_each(|x| *x /= n);
    }
    Err(Error::Numeric("normalization did not reach the unit sphere".into()))
}

/// Per-layer values of a forward pass.
pub(crate) struct ForwardTrace {
    /// `z_h = W_h Φ_{h−1}` for `h = 1..=L`.
    pub pre: Vec<Vec<f64>>,
    /// `σ(z_h)/√m` before any projection.
    pub raw: Vec<Vec<f64>>,
    /// `Φ_0 = x, …, Φ_L`.
    pub post: Vec<Vec<f64>>,
}

pub(crate) fn check_input(cfg: &NetworkConfig, x: &[f64]) -> Result<()> {
    if x.len() != cfg.input_dim {
        return Err(domain(format!("input has dimension {}, expected {}", x.len(), cfg.input_dim)));
    }
    let n = norm(x);
    if (n - 1.0).abs() > UNIT_TOL && !cfg.activation.odd_monotone_concave() {
        return Err(domain(format!(
            "input norm {n} is not 1 and '{}' does not support general norms",
            cfg.activation.name()
        )));
    }
    Ok(())
}

pub(crate) fn forward(net: &NetworkSample, x: &[f64]) -> Result<ForwardTrace> {
    let cfg = &net.config;
    check_input(cfg, x)?;
    let scale = 1.0 / (cfg.width as f64).sqrt();
    let mut trace = ForwardTrace { pre: Vec::new(), raw: Vec::new(), post: vec![x.to_vec()] };
    for w in &net.layers {
        let z = w.matvec(trace.post.last().expect("input present"));
        let u: Vec<f64> = z.iter().map(|&t| cfg.activation.eval(t) * scale).collect();
        let phi = if cfg.normalize_layers { project_unit(&u)? } else { u.clone() };
        trace.pre.push(z);
        trace.raw.push(u);
        trace.post.push(phi);
    }
    Ok(trace)
}

/// Layer-`L` representation `Φ(x)`; `x` itself when `L = 0`.
pub fn feature_map(net: &NetworkSample, x: &[f64]) -> Result<Vec<f64>> {
    Ok(forward(net, x)?.post.pop().expect("input present"))
}
