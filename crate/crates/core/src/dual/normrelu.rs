//! Closed forms for `NormReLU_c(u) = λ(c)·(max(u − c, 0) + b(c))`.

use crate::error::{domain, Result};
use std::f64::consts::{FRAC_1_SQRT_2, PI};

/// Upper tail `P(X > x)` of the standard normal.
fn normal_tail(x: f64) -> f64 {
    0.5 * libm::erfc(x * FRAC_1_SQRT_2)
}

fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NormReluConstants {
    pub c: f64,
    /// `−E[max(X − c, 0)]`.
    pub b: f64,
    /// `1/√Var[max(X − c, 0)]`.
    pub lambda: f64,
    /// Coefficient of non-linearity.
    pub mu: f64,
}

pub fn normrelu_constants(c: f64) -> Result<NormReluConstants> {
    if !(-10.0..=10.0).contains(&c) {
        return Err(domain(format!("kink {c} outside [-10, 10]")));
    }
    let (tail, pdf) = (normal_tail(c), normal_pdf(c));
    let b = tail * c - pdf;
    let var = (1.0 + c * c) * tail - c * pdf - b * b;
    let lambda = var.sqrt().recip();
    let mu = 1.0 - lambda * lambda * tail.powi(2);
    Ok(NormReluConstants { c, b, lambda, mu })
}

/// NormReLU together with its norm-transfer quantities in closed form.
#[derive(Clone, Copy, Debug)]
pub struct NormRelu {
    pub constants: NormReluConstants,
}

impl NormRelu {
    pub fn new(c: f64) -> Result<Self> {
        Ok(Self { constants: normrelu_constants(c)? })
    }

    fn parts(&self, gamma: f64) -> (f64, f64, f64) {
        let s = gamma.sqrt();
        let t = self.constants.c / s;
        (s, normal_tail(t), normal_pdf(t))
    }

    /// `E[σ(z)]` for `z ~ N(0, γ)`, i.e. the zeroth generalized coefficient.
    pub fn a0(&self, gamma: f64) -> f64 {
        let NormReluConstants { c, b, lambda, .. } = self.constants;
        let (s, tail, pdf) = self.parts(gamma);
        lambda * (s * pdf - tail * c + b)
    }

    /// `E[σ(z)²]` for `z ~ N(0, γ)`.
    pub fn length_map(&self, gamma: f64) -> f64 {
        let NormReluConstants { c, b, lambda, .. } = self.constants;
        let (s, tail, pdf) = self.parts(gamma);
        lambda * lambda * ((c * c + gamma - 2.0 * c * b) * tail + (2.0 * b - c) * s * pdf + b * b)
    }

    pub fn length_map_derivative(&self, gamma: f64) -> f64 {
        let NormReluConstants { b, lambda, .. } = self.constants;
        let (s, tail, pdf) = self.parts(gamma);
        lambda * lambda * (tail + b / s * pdf)
    }

    /// Share of the second moment carried by the constant coefficient.
    pub fn bias(&self, gamma: f64) -> Result<f64> {
        if !(0.25..=4.0).contains(&gamma) {
            return Err(domain(format!("squared norm {gamma} outside [0.25, 4]")));
        }
        Ok(self.a0(gamma).powi(2) / self.length_map(gamma))
    }

    /// `2σ̂_l(1/2) − 1`.
    pub fn alpha_minus(&self) -> f64 {
        2.0 * self.length_map(0.5) - 1.0
    }

    /// `1 − σ̂_l'(1)`.
    pub fn alpha_plus(&self) -> f64 {
        1.0 - self.length_map_derivative(1.0)
    }

    pub fn alpha(&self) -> f64 {
        self.alpha_minus().min(self.alpha_plus())
    }

    /// Largest bias-to-contraction ratio over the window `[1/2, 2]`.
    pub fn delta_prime(&self) -> f64 {
        let lo = self.a0(0.5).powi(2) / self.length_map(0.5) / self.alpha_minus();
        let hi = self.a0(2.0).powi(2) / self.length_map(2.0) / self.alpha_plus();
        lo.max(hi)
    }

    /// Number of layers after which the norms are within `ε` of one.
    pub fn l_hat(&self, eps: f64) -> f64 {
        let mu = self.constants.mu;
        2.0 / self.alpha() * (3.0 / eps.min(mu / 4.0)).ln()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dual::ActivationSpec;
    use crate::hermite::rule_for;

    #[test]
    fn default_kink_constants() {
        let k = normrelu_constants(-1.5975).unwrap();
        assert!((k.lambda - 1.05).abs() < 5e-3);
        assert!((k.mu - 0.0156).abs() < 1e-3);
        let r = NormRelu::new(-1.5975).unwrap();
        assert!((r.alpha_minus() - 0.0798).abs() < 2e-3);
        assert!((r.alpha_plus() - 0.1572).abs() < 2e-3);
        assert!((r.length_map(0.5) - 0.5399).abs() < 5e-4);
    }

    #[test]
    fn zero_kink() {
        let k = normrelu_constants(0.0).unwrap();
        assert!((k.b + 1.0 / (2.0 * std::f64::consts::PI).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn closed_forms_agree_with_quadrature() {
        for &c in &[-3.0, -1.5975, 0.0, 0.7, 2.5] {
            let r = NormRelu::new(c).unwrap();
            let s = ActivationSpec::normrelu(c).unwrap();
            for &g in &[0.3, 0.5, 1.0, 2.0, 3.7] {
                let rule = rule_for(&s, g);
                let sg = g.sqrt();
                let m1 = rule.expect(|u| s.eval(sg * u));
                let m2 = rule.expect(|u| s.eval(sg * u).powi(2));
                let d = rule.expect(|u| s.eval(sg * u) * s.derivative(sg * u) * u) / sg;
                assert!((m1 - r.a0(g)).abs() < 1e-9 * m1.abs().max(1.0), "c={c} γ={g} m1 {}", m1 - r.a0(g));
                assert!((m2 - r.length_map(g)).abs() < 1e-9 * m2.abs().max(1.0), "c={c} γ={g} m2 {}", m2 - r.length_map(g));
                assert!((d - r.length_map_derivative(g)).abs() < 1e-9 * d.abs().max(1.0), "c={c} γ={g} d {}", d - r.length_map_derivative(g));
            }
            assert!(r.bias(1.0).unwrap() < 1e-20);
        }
    }

    #[test]
    fn bias_window() {
        let r = NormRelu::new(-1.5975).unwrap();
        assert!(r.bias(0.1).is_err());
        assert!((r.bias(0.5).unwrap() - 0.00086).abs() < 2e-4);
        assert!((r.bias(2.0).unwrap() - 0.0029).abs() < 5e-4);
    }
}
