use crate::conditioning::{spectrum, GramMatrix};
use crate::dual::{ActivationSpec, DualActivation};
use crate::error::{domain, Error, Result};
use crate::linalg::{dot, spd_solve, Matrix};
use crate::montecarlo::TrialSummary;
use crate::rng;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Condition number above which the interpolator is refused.
pub const MAX_KAPPA: f64 = 1e12;

/// Largest tolerated `|K̄α − y|`.
pub const RESIDUAL_TOL: f64 = 1e-8;

/// Dual weights `α = K̄⁻¹y` of the minimum-norm interpolator.
#[derive(Clone, Debug, Serialize)]
pub struct Interpolant {
    pub dual_weights: Vec<f64>,
    pub train_residuals: Vec<f64>,
    pub max_residual: f64,
    /// `yᵀK̄⁻¹y`, the squared norm of the predictor.
    pub norm_sq: f64,
    pub kappa: f64,
}

pub fn min_norm_interpolator(k: &GramMatrix, y: &[f64]) -> Result<Interpolant> {
    let m = k.entries();
    if y.len() != k.n() {
        return Err(domain(format!("{} labels for a {}x{} kernel", y.len(), k.n(), k.n())));
    }
    let s = spectrum(m)?;
    if s.lambda_min <= 1e-10 || s.kappa > MAX_KAPPA {
        return Err(Error::Numeric(format!(
            "kernel is too ill-conditioned to interpolate (λ_min = {:.3e}, κ = {:.3e}); increase the depth",
            s.lambda_min, s.kappa
        )));
    }
    let alpha = spd_solve(m, y)?;
    let fitted = m.matvec(&alpha);
    let train_residuals: Vec<f64> = fitted.iter().zip(y).map(|(f, t)| f - t).collect();
    let max_residual = train_residuals.iter().fold(0.0f64, |a, r| a.max(r.abs()));
    if max_residual > RESIDUAL_TOL {
        return Err(Error::Numeric(format!("interpolation residual {max_residual:.3e} exceeds {RESIDUAL_TOL}")));
    }
    Ok(Interpolant { norm_sq: dot(y, &alpha), dual_weights: alpha, train_residuals, max_residual, kappa: s.kappa })
}

/// Seeded source of unit-sphere inputs and labels in `[−1, 1]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum DataGenerator {
    /// `y = (1 − noise)·⟨θ, x⟩ + noise·U(−1, 1)` for a unit `θ` fixed by the seed.
    Linear { dim: usize, noise: f64 },
    /// `y ~ U(−1, 1)` independent of `x`.
    Noise { dim: usize },
    /// `y = 0`.
    Zero { dim: usize },
}

impl DataGenerator {
    pub fn dim(&self) -> usize {
        match *self {
            Self::Linear { dim, .. } | Self::Noise { dim } | Self::Zero { dim } => dim,
        }
    }

    /// `n` examples for the given role; different roles are independent.
    pub fn sample(&self, n: usize, seed: u64, role: u64) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
        let dim = self.dim();
        if dim == 0 {
            return Err(domain("input dimension must be positive"));
        }
        if let Self::Linear { noise, .. } = *self {
            if !(0.0..=1.0).contains(&noise) {
                return Err(domain(format!("noise level {noise} outside [0, 1]")));
            }
        }
        let mut xr = rng::stream(seed, &[rng::domain::INPUTS, role, n as u64], 0);
        let mut yr = rng::stream(seed, &[rng::domain::LABELS, role, n as u64], 0);
        let theta = rng::unit_vector(&mut rng::stream(seed, &[rng::domain::LABELS, u64::MAX], 0), dim);
        let xs: Vec<Vec<f64>> = (0..n).map(|_| rng::unit_vector(&mut xr, dim)).collect();
        let ys = xs
            .iter()
            .map(|x| match *self {
                Self::Linear { noise, .. } => {
                    let clean = dot(&theta, x);
                    let u: f64 = if noise > 0.0 { yr.gen_range(-1.0..=1.0) } else { 0.0 };
                    ((1.0 - noise) * clean + noise * u).clamp(-1.0, 1.0)
                }
                Self::Noise { .. } => yr.gen_range(-1.0..=1.0),
                Self::Zero { .. } => 0.0,
            })
            .collect();
        Ok((xs, ys))
    }
}

/// Test risk of the `n`-sample interpolator minus that of an interpolator
/// fitted on an independent reference sample, on the same test points.
#[derive(Clone, Debug, Serialize)]
pub struct RiskReport {
    pub n: usize,
    pub reference_n: usize,
    pub depth: usize,
    /// Mean over test points of the paired squared-error difference.
    pub excess_risk: f64,
    pub std_error: f64,
    pub test_risk: f64,
    pub reference_risk: f64,
    /// `√(yᵀK̄⁻¹y)`.
    pub predictor_norm: f64,
    pub max_train_residual: f64,
    pub kappa: f64,
}

struct Fit {
    xs: Vec<Vec<f64>>,
    interp: Interpolant,
}

fn fit(kernel: &(dyn Fn(f64) -> f64 + Sync), xs: Vec<Vec<f64>>, ys: &[f64]) -> Result<Fit> {
    let n = xs.len();
    let mut m = Matrix::zeros(n, n);
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| (0..=i).map(|j| if i == j { 1.0 } else { kernel(dot(&xs[i], &xs[j])) }).collect())
        .collect();
    for (i, row) in rows.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            m[(i, j)] = *v;
            m[(j, i)] = *v;
        }
    }
    let interp = min_norm_interpolator(&GramMatrix::new(m)?, ys)?;
    Ok(Fit { xs, interp })
}

impl Fit {
    fn predict(&self, kernel: &(dyn Fn(f64) -> f64 + Sync), x: &[f64]) -> f64 {
        self.xs.iter().zip(&self.interp.dual_weights).map(|(xi, a)| a * kernel(dot(xi, x))).sum()
    }
}

/// Fits the kernel interpolator `x ↦ Σ α_i σ̂^{(L)}(x·x_i)` on `n` examples
/// and on `reference_n` independent examples, and compares their risks on
/// `n_test` fresh points. The reference sample depends only on its size and
/// the seed, so runs sharing `reference_n` share the comparator.
#[allow(clippy::too_many_arguments)]
pub fn excess_risk_estimate(
    sigma: &ActivationSpec,
    depth: usize,
    n: usize,
    reference_n: usize,
    n_test: usize,
    data: &DataGenerator,
    seed: u64,
) -> Result<RiskReport> {
    if n == 0 || reference_n == 0 || n_test < 2 {
        return Err(domain("need training and reference examples and at least two test points"));
    }
    let d = DualActivation::new(sigma.clone())?;
    if (d.second_moment() - 1.0).abs() > 1e-6 {
        return Err(domain(format!("'{}' must have E[σ²] = 1 so that inputs stay on the sphere", d.name())));
    }
    let kernel = |r: f64| (0..depth).fold(r.clamp(-1.0, 1.0), |r, _| d.eval_unchecked(r).clamp(-1.0, 1.0));
    let (xs, ys) = data.sample(n, seed, 0)?;
    let (rx, ry) = data.sample(reference_n, seed, 1)?;
    let (tx, ty) = data.sample(n_test, seed, 2)?;
    let small = fit(&kernel, xs, &ys)?;
    let large = fit(&kernel, rx, &ry)?;
    let errs: Vec<(f64, f64)> = tx
        .par_iter()
        .zip(&ty)
        .map(|(x, y)| ((small.predict(&kernel, x) - y).powi(2), (large.predict(&kernel, x) - y).powi(2)))
        .collect();
    let diffs: Vec<f64> = errs.iter().map(|(a, b)| a - b).collect();
    let summary = TrialSummary::from_samples(&diffs);
    let test_risk = errs.iter().map(|e| e.0).sum::<f64>() / n_test as f64;
    let reference_risk = errs.iter().map(|e| e.1).sum::<f64>() / n_test as f64;
    Ok(RiskReport {
        n,
        reference_n,
        depth,
        excess_risk: summary.mean,
        std_error: summary.std_error,
        test_risk,
        reference_risk,
        predictor_norm: small.interp.norm_sq.max(0.0).sqrt(),
        max_train_residual: small.interp.max_residual,
        kappa: small.interp.kappa,
    })
}
