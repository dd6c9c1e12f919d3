//! Square-loss training of the top layer on fixed features, and the
//! minimum-norm kernel interpolator.

mod interpolation;

pub use interpolation::{excess_risk_estimate, min_norm_interpolator, DataGenerator, Interpolant, RiskReport};

use crate::conditioning::spectrum;
use crate::error::{domain, Error, Result};
use crate::linalg::{dot, Matrix};
use crate::rng;
use rand::Rng;
use serde::Serialize;

/// Design matrix (one row per example) and labels in `[−1, 1]`.
#[derive(Clone, Debug)]
pub struct RegressionProblem {
    features: Matrix,
    labels: Vec<f64>,
}

impl RegressionProblem {
    pub fn new(features: Matrix, labels: Vec<f64>) -> Result<Self> {
        if features.rows() != labels.len() {
            return Err(domain(format!("{} rows but {} labels", features.rows(), labels.len())));
        }
        if features.rows() == 0 || features.cols() == 0 {
            return Err(domain("empty design"));
        }
        if let Some(y) = labels.iter().find(|y| !(y.abs() <= 1.0)) {
            return Err(domain(format!("label {y} outside [-1, 1]")));
        }
        if features.as_slice().iter().any(|v| !v.is_finite()) {
            return Err(domain("design contains non-finite entries"));
        }
        Ok(Self { features, labels })
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    /// `(1/n) Σ (a_i·w − y_i)²`.
    pub fn loss(&self, w: &[f64]) -> f64 {
        let pred = self.features.matvec(w);
        pred.iter().zip(&self.labels).map(|(p, y)| (p - y).powi(2)).sum::<f64>() / self.n() as f64
    }

    /// Largest squared row norm.
    pub fn beta(&self) -> f64 {
        (0..self.n()).map(|i| dot(self.features.row(i), self.features.row(i))).fold(0.0, f64::max)
    }

    /// `(λ_min, λ_max)` of `AᵀA` on the row space, i.e. of `AAᵀ`. Errors
    /// when the examples are linearly dependent.
    pub fn gram_extremes(&self) -> Result<(f64, f64)> {
        let s = spectrum(&self.features.row_gram())?;
        if s.degenerate || s.lambda_min <= 1e-12 * s.lambda_max {
            return Err(Error::Domain(format!(
                "feature Gram is singular (λ_min = {:.3e}); zero loss is not attainable, use a deeper network",
                s.lambda_min
            )));
        }
        Ok((s.lambda_min, s.lambda_max))
    }

    /// `2/(λ_min + λ_max)` of the loss Hessian `(2/n)AᵀA`.
    pub fn optimal_step_size(&self) -> Result<f64> {
        let (lo, hi) = self.gram_extremes()?;
        Ok(self.n() as f64 / (lo + hi))
    }
}

/// One optimization run. `loss[k]` is the loss after `steps[k]` updates.
#[derive(Clone, Debug, Serialize)]
pub struct TrainRun {
    pub step_size: f64,
    pub iterations: usize,
    pub steps: Vec<usize>,
    pub loss: Vec<f64>,
    /// The guaranteed envelope at each recorded step.
    pub rate_bound: Vec<f64>,
    /// `κ(AᵀA)` restricted to the row space.
    pub kappa: f64,
    pub lambda_min: f64,
    pub lambda_max: f64,
}

impl TrainRun {
    pub const CSV_HEADER: &'static str = "iteration,loss,rateBound";

    pub fn final_loss(&self) -> f64 {
        *self.loss.last().expect("at least the initial loss is recorded")
    }

    /// Every recorded loss is at most its envelope plus `1e-9`.
    pub fn within_rate_bound(&self) -> bool {
        self.loss.iter().zip(&self.rate_bound).all(|(l, b)| *l <= b + 1e-9)
    }

    pub fn non_increasing(&self) -> bool {
        self.loss.windows(2).all(|w| w[1] <= w[0])
    }

    /// First recorded step at which the loss is at most `target`.
    pub fn steps_to(&self, target: f64) -> Option<usize> {
        self.steps.iter().zip(&self.loss).find(|(_, l)| **l <= target).map(|(s, _)| *s)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for ((s, l), b) in self.steps.iter().zip(&self.loss).zip(&self.rate_bound) {
            out.push_str(&format!("{s},{l:.16e},{b:.16e}\n"));
        }
        out
    }
}

/// Full-batch gradient descent from `w = 0`, recording the loss at every step
/// against `e^{−t/(4κ)} L(w₀)`.
pub fn gd_top_layer(problem: &RegressionProblem, eta: f64, iterations: usize) -> Result<TrainRun> {
    if !(eta > 0.0 && eta.is_finite()) || iterations == 0 {
        return Err(domain("step size and iteration count must be positive"));
    }
    let (lo, hi) = problem.gram_extremes()?;
    let kappa = hi / lo;
    let a = &problem.features;
    let n = problem.n() as f64;
    let mut w = vec![0.0; a.cols()];
    let l0 = problem.loss(&w);
    let mut run = TrainRun {
        step_size: eta,
        iterations,
        steps: vec![0],
        loss: vec![l0],
        rate_bound: vec![l0],
        kappa,
        lambda_min: lo,
        lambda_max: hi,
    };
    for t in 1..=iterations {
        let resid: Vec<f64> = a.matvec(&w).iter().zip(&problem.labels).map(|(p, y)| p - y).collect();
        let grad = a.tr_matvec(&resid);
        for (wi, gi) in w.iter_mut().zip(grad) {
            *wi -= eta * 2.0 / n * gi;
        }
        run.steps.push(t);
        run.loss.push(problem.loss(&w));
        run.rate_bound.push((-(t as f64) / (4.0 * kappa)).exp() * l0);
    }
    Ok(run)
}

/// Stochastic gradient descent with `η = 1/(2β)` in restarted epochs of
/// `T = ⌈8nβ/λ_min⌉` single-example steps. Each epoch restarts from the
/// average of its iterates; there are `⌈ln(1/ε)⌉` epochs. `beta` defaults
/// to the largest squared row norm and may not be smaller than it.
pub fn sgd_top_layer(problem: &RegressionProblem, seed: u64, eps: f64, beta: Option<f64>) -> Result<TrainRun> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(domain(format!("ε = {eps} outside (0, 1)")));
    }
    let measured = problem.beta();
    let beta = beta.unwrap_or(measured);
    if !(beta >= measured) {
        return Err(domain(format!("β = {beta} is below the largest squared row norm {measured}")));
    }
    let (lo, hi) = problem.gram_extremes()?;
    let n = problem.n();
    let eta = 1.0 / (2.0 * beta);
    let epoch_len = (8.0 * n as f64 * beta / lo).ceil() as usize;
    let epochs = (1.0 / eps).ln().ceil().max(1.0) as usize;
    let a = &problem.features;
    let p = a.cols();
    let mut rng = rng::stream(seed, &[rng::domain::SGD], 0);
    let mut w = vec![0.0; p];
    let l0 = problem.loss(&w);
    let mut run = TrainRun {
        step_size: eta,
        iterations: epoch_len * epochs,
        steps: vec![0],
        loss: vec![l0],
        rate_bound: vec![l0],
        kappa: hi / lo,
        lambda_min: lo,
        lambda_max: hi,
    };
    for k in 1..=epochs {
        let mut avg = vec![0.0; p];
        for _ in 0..epoch_len {
            let i = rng.gen_range(0..n);
            let row = a.row(i);
            let r = dot(row, &w) - problem.labels[i];
            for (wi, ai) in w.iter_mut().zip(row) {
                *wi -= eta * 2.0 * r * ai;
            }
            for (s, wi) in avg.iter_mut().zip(&w) {
                *s += wi;
            }
        }
        w = avg.into_iter().map(|s| s / epoch_len as f64).collect();
        run.steps.push(k * epoch_len);
        run.loss.push(problem.loss(&w));
        // Expected loss halves per epoch.
        run.rate_bound.push(l0 * 0.5f64.powi(k as i32));
    }
    Ok(run)
}
