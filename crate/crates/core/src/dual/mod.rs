//! Dual activations: the map `ρ ↦ E[σ(X)σ(Y)]` for unit Gaussians with
//! correlation `ρ`, its derivative, and the scalar summaries derived from
//! the Hermite coefficients of `σ`.

mod activation;
mod normrelu;
mod norms;

pub use activation::{ActivationSpec, Shape, BUILTIN_NAMES, NORMALIZED_NONLINEAR, NORMRELU_DEFAULT_C};
pub use normrelu::{normrelu_constants, NormRelu, NormReluConstants};
pub use norms::{dot_product_map, dot_product_map_quadrature, NormTransferMap, NORM_WINDOW};

use crate::error::{domain, Error, Result};
use crate::hermite::{expand, rule_for, DEFAULT_DEGREE};

/// Below this, `tail + Σ_{i≥2} b_i` is treated as zero and the activation as affine.
pub const AFFINE_TOLERANCE: f64 = 1e-10;

/// Largest `|ρ|` accepted before clamping to `[-1, 1]`.
pub const RHO_SLACK: f64 = 1e-9;

/// The dual of an activation together with its squared Hermite coefficients.
///
/// Evaluation uses the activation's closed-form dual when one exists. Otherwise
/// it sums `b_0..b_N` and places the residual energy at degree `N+1`, which is
/// the dual of a genuine activation with the same low-order coefficients.
#[derive(Clone, Debug)]
pub struct DualActivation {
    spec: ActivationSpec,
    squared: Vec<f64>,
    tail_mass: f64,
    second_moment: f64,
}

/// Result of [`DualActivation::fixed_point`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FixedPoint {
    pub rho_bar: f64,
    pub derivative: f64,
}

impl DualActivation {
    pub fn new(spec: ActivationSpec) -> Result<Self> {
        Self::with_degree(spec, DEFAULT_DEGREE)
    }

    pub fn with_degree(spec: ActivationSpec, degree: usize) -> Result<Self> {
        let rule = rule_for(&spec, 1.0);
        let exp = expand(&spec, degree, 1.0, &rule)?;
        let squared = exp.squared();
        let second_moment = squared.iter().sum::<f64>() + exp.tail_mass;
        Ok(Self { spec, squared, tail_mass: exp.tail_mass, second_moment })
    }

    /// Looks up a registry activation by name.
    pub fn builtin(name: &str) -> Result<Self> {
        Self::new(ActivationSpec::builtin(name)?)
    }

    pub fn spec(&self) -> &ActivationSpec {
        &self.spec
    }

    pub fn name(&self) -> &str {
        self.spec.name()
    }

    /// `b_i = a_i²` for `i = 0..=N`.
    pub fn squared_coefficients(&self) -> &[f64] {
        &self.squared
    }

    pub fn degree(&self) -> usize {
        self.squared.len() - 1
    }

    pub fn tail_mass(&self) -> f64 {
        self.tail_mass
    }

    /// `E[σ(X)²] = σ̂(1)`.
    pub fn second_moment(&self) -> f64 {
        self.second_moment
    }

    fn b(&self, i: usize) -> f64 {
        self.squared.get(i).copied().unwrap_or(0.0)
    }

    /// Energy of `σ` outside the span of `{1, u}`.
    pub fn nonaffine_energy(&self) -> f64 {
        (self.second_moment - self.b(0) - self.b(1)).max(0.0)
    }

    pub fn is_affine(&self) -> bool {
        self.nonaffine_energy() <= AFFINE_TOLERANCE
    }

    /// Coefficient of non-linearity `1 − σ̂'(0)/(σ̂(1) − σ̂(0))`. Zero for
    /// affine activations; check [`Self::is_affine`] to tell the cases apart.
    pub fn mu(&self) -> f64 {
        if self.is_affine() {
            return 0.0;
        }
        1.0 - self.b(1) / (self.second_moment - self.b(0))
    }

    /// Coefficient of non-affinity `1 − (b₀ + b₁)/E[σ²]`.
    pub fn mu_tilde(&self) -> f64 {
        self.nonaffine_energy() / self.second_moment
    }

    /// `σ̂'(1)`; infinite for activations with a jump.
    pub fn derivative_at_one(&self) -> f64 {
        self.derivative_unchecked(1.0)
    }

    fn check(rho: f64) -> Result<f64> {
        if !(rho.abs() <= 1.0 + RHO_SLACK) {
            return Err(domain(format!("correlation {rho} lies outside [-1, 1]")));
        }
        Ok(rho.clamp(-1.0, 1.0))
    }

    /// `σ̂(ρ)`.
    pub fn eval(&self, rho: f64) -> Result<f64> {
        Ok(self.eval_unchecked(Self::check(rho)?))
    }

    /// `σ̂'(ρ)`.
    pub fn derivative(&self, rho: f64) -> Result<f64> {
        Ok(self.derivative_unchecked(Self::check(rho)?))
    }

    /// `σ̂(ρ)` for `ρ` already known to lie in `[-1, 1]`.
    pub(crate) fn eval_unchecked(&self, rho: f64) -> f64 {
        if let Some(v) = self.spec.closed_form_dual(rho) {
            return v;
        }
        let n = self.squared.len();
        let head = self.squared.iter().rev().fold(0.0, |acc, b| acc * rho + b);
        head + self.tail_mass * rho.powi(n as i32)
    }

    pub(crate) fn derivative_unchecked(&self, rho: f64) -> f64 {
        if let Some(v) = self.spec.closed_form_dual_derivative(rho) {
            return v;
        }
        let n = self.squared.len();
        let head = self
            .squared
            .iter()
            .enumerate()
            .skip(1)
            .rev()
            .fold(0.0, |acc, (i, b)| acc * rho + i as f64 * b);
        head + n as f64 * self.tail_mass * rho.powi(n as i32 - 1)
    }

    /// Size of the truncated tail at `ρ` for series evaluation; zero when a
    /// closed form is used.
    pub fn truncation_uncertainty(&self, rho: f64) -> f64 {
        if self.spec.has_closed_form() {
            0.0
        } else {
            self.tail_mass * rho.abs().powi(self.squared.len() as i32)
        }
    }

    /// `σ̂` applied `times` times.
    pub fn iterate(&self, rho: f64, times: usize) -> Result<f64> {
        let mut r = Self::check(rho)?;
        for _ in 0..times {
            r = self.eval_unchecked(r).clamp(-1.0, 1.0);
        }
        Ok(r)
    }

    /// Smallest fixed point of `σ̂` in `[0, 1]`.
    ///
    /// `σ̂(ρ) − ρ` is convex on `[0, 1]`, so it has a negative minimum exactly
    /// when an interior root exists; the root is then bracketed by zero and
    /// the minimizer.
    pub fn fixed_point(&self) -> Result<FixedPoint> {
        if self.is_affine() {
            return Err(domain(format!(
                "'{}' is affine, so every correlation is a fixed point",
                self.name()
            )));
        }
        let g = |r: f64| self.eval_unchecked(r) - r;
        if self.eval_unchecked(0.0).abs() <= 1e-15 {
            return Ok(FixedPoint { rho_bar: 0.0, derivative: self.derivative_unchecked(0.0) });
        }

        let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
        let (mut a, mut b) = (0.0, 1.0);
        let mut c = b - inv_phi * (b - a);
        let mut d = a + inv_phi * (b - a);
        let (mut gc, mut gd) = (g(c), g(d));
        while b - a > 1e-10 {
            if gc < gd {
                b = d;
                d = c;
                gd = gc;
                c = b - inv_phi * (b - a);
                gc = g(c);
            } else {
                a = c;
                c = d;
                gc = gd;
                d = a + inv_phi * (b - a);
                gd = g(d);
            }
        }
        let argmin = 0.5 * (a + b);
        if g(argmin) >= -1e-13 {
            return Ok(FixedPoint { rho_bar: 1.0, derivative: self.derivative_unchecked(1.0) });
        }

        let (mut lo, mut hi) = (0.0, argmin);
        while hi - lo > 1e-12 {
            let mid = 0.5 * (lo + hi);
            if g(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let rho_bar = 0.5 * (lo + hi);
        let derivative = self.derivative_unchecked(rho_bar);
        if derivative >= 1.0 {
            return Err(Error::Numeric(format!(
                "interior fixed point {rho_bar} has derivative {derivative} >= 1"
            )));
        }
        Ok(FixedPoint { rho_bar, derivative })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{E, PI};

    fn dual(name: &str) -> DualActivation {
        DualActivation::builtin(name).unwrap()
    }

    #[test]
    fn table_values_of_mu() {
        assert!((dual("relu").mu() - (PI - 2.0) / (2.0 * PI - 2.0)).abs() < 1e-6);
        assert!((dual("step").mu() - (PI - 2.0) / PI).abs() < 1e-6);
        assert!((dual("exp").mu() - (E - 2.0) / (E - 1.0)).abs() < 1e-6);
        assert!((dual("hermite2").mu() - 1.0).abs() < 1e-6);
        let id = dual("identity");
        assert!(id.is_affine());
        assert_eq!(id.mu(), 0.0);
    }

    #[test]
    fn relu_dual_examples() {
        let d = dual("relu");
        assert!((d.eval(0.0).unwrap() - 1.0 / (2.0 * PI)).abs() < 1e-14);
        assert!((d.eval(1.0).unwrap() - 0.5).abs() < 1e-14);
        let n = dual("relu-normalized");
        assert!((n.derivative(1.0).unwrap() - PI / (PI - 1.0)).abs() < 1e-9);
        assert!(n.eval(0.0).unwrap().abs() < 1e-12);
        assert!((n.eval(1.0).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn derivative_examples() {
        assert_eq!(dual("identity").derivative(0.3).unwrap(), 1.0);
        assert!((dual("hermite2").derivative(1.0).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn out_of_range_correlation_is_rejected() {
        let d = dual("relu");
        assert!(d.eval(1.0 + 1e-6).is_err());
        assert!(d.eval(1.0 + 1e-10).is_ok());
        assert!(d.derivative(-1.5).is_err());
        assert!(d.eval(f64::NAN).is_err());
    }

    #[test]
    fn nonaffinity_of_square_normalized_step() {
        let d = dual("step-sqnorm");
        assert!((d.mu_tilde() - (0.5 - 1.0 / PI)).abs() < 1e-6);
        assert!((d.second_moment() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn nonaffinity_equals_nonlinearity_when_centred() {
        for name in NORMALIZED_NONLINEAR {
            let d = dual(name);
            assert!((d.mu() - d.mu_tilde()).abs() < 1e-6, "{name}");
        }
    }

    #[test]
    fn affine_series_has_zero_nonaffinity() {
        let s = ActivationSpec::hermite_series("affine", vec![0.6, 0.8]);
        let d = DualActivation::new(s).unwrap();
        assert!(d.mu_tilde().abs() < 1e-12);
        assert!(d.fixed_point().is_err());
    }

    #[test]
    fn fixed_points() {
        assert_eq!(dual("relu-normalized").fixed_point().unwrap().rho_bar, 0.0);
        let d = dual("step-sqnorm");
        let fp = d.fixed_point().unwrap();
        assert!(fp.rho_bar > 0.0 && fp.rho_bar < 1.0);
        let closed = (PI - fp.rho_bar.acos()) / PI;
        assert!((closed - fp.rho_bar).abs() < 1e-11);
        assert!(fp.derivative < 1.0);
        assert!(dual("identity").fixed_point().is_err());
    }

    #[test]
    fn series_without_interior_fixed_point() {
        let a = vec![0.5, 0.5f64.sqrt(), 0.5];
        let d = DualActivation::new(ActivationSpec::hermite_series("tangent", a)).unwrap();
        let fp = d.fixed_point().unwrap();
        assert_eq!(fp.rho_bar, 1.0);
        assert!((fp.derivative - 1.0).abs() < 1e-12);
    }

    #[test]
    fn registry_rejects_unknown_names() {
        let err = ActivationSpec::builtin("softsign").unwrap_err().to_string();
        assert!(err.contains("relu-normalized"));
        assert!(ActivationSpec::builtin("normrelu:x").is_err());
    }

    #[test]
    fn normalized_builtins_are_normalized() {
        for name in NORMALIZED_NONLINEAR {
            let s = ActivationSpec::builtin(name).unwrap();
            let rule = rule_for(&s, 1.0);
            let m1 = rule.expect(|x| s.eval(x));
            let m2 = rule.expect(|x| s.eval(x).powi(2));
            assert!(m1.abs() < 1e-8, "{name}: mean {m1}");
            assert!((m2 - 1.0).abs() < 1e-8, "{name}: second moment {m2}");
        }
    }
}
