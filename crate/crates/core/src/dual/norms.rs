use super::ActivationSpec;
use crate::error::{domain, Result};
use crate::hermite::{bivariate_expectation, expand, rule_for, DEFAULT_DEGREE};

/// Squared norms accepted by [`dot_product_map`].
pub const NORM_WINDOW: (f64, f64) = (0.05, 20.0);

/// How the squared norm of a representation changes across one layer:
/// `γ ↦ E[σ(√γ u)²]` for a standard normal `u`.
#[derive(Clone, Debug)]
pub struct NormTransferMap {
    spec: ActivationSpec,
    alpha: f64,
    hypotheses_hold: bool,
}

impl NormTransferMap {
    pub fn new(spec: ActivationSpec) -> Self {
        let hypotheses_hold = spec.odd_monotone_concave();
        let mut map = Self { spec, alpha: 0.0, hypotheses_hold };
        map.alpha = (2.0 * map.value(0.5) - 1.0).min(1.0 - map.derivative(1.0));
        map
    }

    pub fn spec(&self) -> &ActivationSpec {
        &self.spec
    }

    /// `σ̂_l(γ)`.
    pub fn value(&self, gamma: f64) -> f64 {
        if gamma <= 0.0 {
            return self.spec.eval(0.0).powi(2);
        }
        let s = gamma.sqrt();
        rule_for(&self.spec, gamma).expect(|u| self.spec.eval(s * u).powi(2))
    }

    /// `σ̂_l'(γ) = E[σ(√γ u) σ'(√γ u) u]/√γ`.
    pub fn derivative(&self, gamma: f64) -> f64 {
        let s = gamma.sqrt();
        rule_for(&self.spec, gamma).expect(|u| self.spec.eval(s * u) * self.spec.derivative(s * u) * u) / s
    }

    /// Contraction constant `min(2σ̂_l(1/2) − 1, 1 − σ̂_l'(1))`.
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Whether `σ` passed the grid check for being odd, non-decreasing and
    /// concave on the positive axis. The contraction guarantee assumes this.
    pub fn hypotheses_hold(&self) -> bool {
        self.hypotheses_hold
    }
}

fn check_window(gamma: f64) -> Result<()> {
    if !(NORM_WINDOW.0..=NORM_WINDOW.1).contains(&gamma) {
        return Err(domain(format!(
            "squared norm {gamma} outside [{}, {}]",
            NORM_WINDOW.0, NORM_WINDOW.1
        )));
    }
    Ok(())
}

/// `E[σ(z₁)σ(z₂)]` for inputs with squared norms `γx`, `γy` and correlation
/// `ρ`, from the generalized Hermite coefficients at the two variances.
pub fn dot_product_map(sigma: &ActivationSpec, gx: f64, gy: f64, rho: f64) -> Result<f64> {
    check_window(gx)?;
    check_window(gy)?;
    if !(rho.abs() <= 1.0 + 1e-9) {
        return Err(domain(format!("correlation {rho} lies outside [-1, 1]")));
    }
    let rho = rho.clamp(-1.0, 1.0);
    if (gx - 1.0).abs() <= 1e-12 && (gy - 1.0).abs() <= 1e-12 {
        if let Some(v) = sigma.closed_form_dual(rho) {
            return Ok(v);
        }
    }
    let ex = expand(sigma, DEFAULT_DEGREE, gx, &rule_for(sigma, gx))?;
    let ey = expand(sigma, DEFAULT_DEGREE, gy, &rule_for(sigma, gy))?;
    let head = ex
        .coefficients
        .iter()
        .zip(&ey.coefficients)
        .rev()
        .fold(0.0, |acc, (a, b)| acc * rho + a * b);
    let tail = (ex.tail_mass * ey.tail_mass).sqrt() * rho.powi(DEFAULT_DEGREE as i32 + 1);
    Ok(head + tail)
}

/// The same quantity by direct two-dimensional quadrature.
pub fn dot_product_map_quadrature(sigma: &ActivationSpec, gx: f64, gy: f64, rho: f64) -> Result<f64> {
    let breaks = sigma.breakpoints();
    let f = |x: f64| sigma.eval(x);
    bivariate_expectation(f, &breaks, f, &breaks, [gx, rho * (gx * gy).sqrt(), gy])
}
