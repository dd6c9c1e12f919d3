use crate::error::{domain, Error, Result};
use crate::hermite::{hermite_values_into, rule_for};
use std::f64::consts::PI;

/// SELU constants.
const SELU_LAMBDA: f64 = 1.050_700_987_355_480_5;
const SELU_ALPHA: f64 = 1.673_263_242_354_377_3;

/// Kink location used by the default `normrelu` entry of the registry.
pub const NORMRELU_DEFAULT_C: f64 = -1.5975;

/// The un-scaled shape of an activation.
#[derive(Clone, Debug, PartialEq)]
pub enum Shape {
    Identity,
    Relu,
    /// `1[u ≥ 0]`.
    Step,
    Exp,
    Tanh,
    /// `(u² − 1)/√2`.
    Hermite2,
    /// `max(u − c, 0)`.
    ShiftedRelu { c: f64 },
    Selu,
    /// `Σ aᵢ hᵢ(u)` for the listed orthonormal coefficients.
    Series(Vec<f64>),
}

impl Shape {
    fn eval(&self, x: f64) -> f64 {
        match self {
            Shape::Identity => x,
            Shape::Relu => x.max(0.0),
            Shape::Step => {
                if x >= 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Shape::Exp => x.exp(),
            Shape::Tanh => x.tanh(),
            Shape::Hermite2 => (x * x - 1.0) / 2f64.sqrt(),
            Shape::ShiftedRelu { c } => (x - c).max(0.0),
            Shape::Selu => {
                if x > 0.0 {
                    SELU_LAMBDA * x
                } else {
                    SELU_LAMBDA * SELU_ALPHA * x.exp_m1()
                }
            }
            Shape::Series(a) => {
                let mut h = vec![0.0; a.len()];
                hermite_values_into(x, &mut h);
                h.iter().zip(a).map(|(h, a)| h * a).sum()
            }
        }
    }

    fn derivative(&self, x: f64) -> f64 {
        match self {
            Shape::Identity => 1.0,
            Shape::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Shape::Step => 0.0,
            Shape::Exp => x.exp(),
            Shape::Tanh => 1.0 - x.tanh().powi(2),
            Shape::Hermite2 => 2f64.sqrt() * x,
            Shape::ShiftedRelu { c } => {
                if x > *c {
                    1.0
                } else {
                    0.0
                }
            }
            Shape::Selu => {
                if x > 0.0 {
                    SELU_LAMBDA
                } else {
                    SELU_LAMBDA * SELU_ALPHA * x.exp()
                }
            }
            Shape::Series(a) => {
                // h_i' = √i h_{i-1}
                let mut h = vec![0.0; a.len().max(1)];
                hermite_values_into(x, &mut h);
                a.iter()
                    .enumerate()
                    .skip(1)
                    .map(|(i, ai)| ai * (i as f64).sqrt() * h[i - 1])
                    .sum()
            }
        }
    }

    fn breakpoints(&self) -> Vec<f64> {
        match self {
            Shape::Relu | Shape::Step | Shape::Selu => vec![0.0],
            Shape::ShiftedRelu { c } => vec![*c],
            _ => vec![],
        }
    }

    /// `E[s(X) s(Y)]` for unit Gaussians with correlation ρ, when known.
    fn dual(&self, rho: f64) -> Option<f64> {
        Some(match self {
            Shape::Identity => rho,
            Shape::Relu => ((1.0 - rho * rho).max(0.0).sqrt() + (PI - rho.acos()) * rho) / (2.0 * PI),
            Shape::Step => (PI - rho.acos()) / (2.0 * PI),
            Shape::Exp => (1.0 + rho).exp(),
            Shape::Hermite2 => rho * rho,
            Shape::Series(a) => a.iter().rev().fold(0.0, |acc, ai| acc * rho + ai * ai),
            _ => return None,
        })
    }

    fn dual_derivative(&self, rho: f64) -> Option<f64> {
        Some(match self {
            Shape::Identity => 1.0,
            Shape::Relu => (PI - rho.acos()) / (2.0 * PI),
            Shape::Step => 1.0 / (2.0 * PI * (1.0 - rho * rho).sqrt()),
            Shape::Exp => (1.0 + rho).exp(),
            Shape::Hermite2 => 2.0 * rho,
            Shape::Series(a) => a
                .iter()
                .enumerate()
                .skip(1)
                .rev()
                .fold(0.0, |acc, (i, ai)| acc * rho + i as f64 * ai * ai),
            _ => return None,
        })
    }

    /// `E[s(X)]` in closed form, when known.
    fn mean(&self) -> Option<f64> {
        Some(match self {
            Shape::Identity | Shape::Tanh | Shape::Hermite2 => 0.0,
            Shape::Relu => 1.0 / (2.0 * PI).sqrt(),
            Shape::Step => 0.5,
            Shape::Exp => 0.5f64.exp(),
            Shape::Series(a) => a.first().copied().unwrap_or(0.0),
            _ => return None,
        })
    }
}

/// A scalar activation `σ(u) = (s(u) − center) / scale` for a shape `s`.
#[derive(Clone, Debug, PartialEq)]
pub struct ActivationSpec {
    name: String,
    shape: Shape,
    center: f64,
    scale: f64,
    normalized: bool,
    shape_mean: f64,
}

impl ActivationSpec {
    /// The shape itself, with no centering or scaling.
    pub fn raw(name: impl Into<String>, shape: Shape) -> Self {
        let shape_mean = shape.mean().unwrap_or_else(|| {
            let s = shape.clone();
            let probe = Self {
                name: String::new(),
                shape: s.clone(),
                center: 0.0,
                scale: 1.0,
                normalized: false,
                shape_mean: 0.0,
            };
            rule_for(&probe, 1.0).expect(|x| s.eval(x))
        });
        Self { name: name.into(), shape, center: 0.0, scale: 1.0, normalized: false, shape_mean }
    }

    /// Centres and rescales so that `E[σ(X)] = 0` and `E[σ(X)²] = 1`.
    pub fn normalized(mut self, name: impl Into<String>) -> Self {
        let rule = rule_for(&self, 1.0);
        let second = rule.expect(|x| self.shape.eval(x).powi(2));
        let var = second - self.shape_mean * self.shape_mean;
        self.center = self.shape_mean;
        self.scale = var.sqrt();
        self.normalized = true;
        self.name = name.into();
        self
    }

    /// Rescales, without centring, so that `E[σ(X)²] = 1`.
    pub fn square_normalized(mut self, name: impl Into<String>) -> Self {
        let rule = rule_for(&self, 1.0);
        let second = rule.expect(|x| self.shape.eval(x).powi(2));
        self.center = 0.0;
        self.scale = second.sqrt();
        self.normalized = false;
        self.name = name.into();
        self
    }

    /// NormReLU with kink `c`, using the closed-form constants.
    pub fn normrelu(c: f64) -> Result<Self> {
        let k = super::normrelu::normrelu_constants(c)?;
        let mut spec = Self::raw(format!("normrelu:{c}"), Shape::ShiftedRelu { c });
        spec.center = -k.b;
        spec.scale = 1.0 / k.lambda;
        spec.normalized = true;
        // E[max(X − c, 0)] = −b(c) by the definition of b.
        spec.shape_mean = -k.b;
        Ok(spec)
    }

    /// An activation given directly by its orthonormal Hermite coefficients.
    pub fn hermite_series(name: impl Into<String>, coefficients: Vec<f64>) -> Self {
        let energy: f64 = coefficients.iter().map(|a| a * a).sum();
        let centered = coefficients.first().map_or(true, |a0| a0.abs() < 1e-15);
        let mut spec = Self::raw(name, Shape::Series(coefficients));
        spec.normalized = centered && (energy - 1.0).abs() < 1e-12;
        spec
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    /// `(center, scale)` such that `σ = (s − center)/scale`.
    pub fn constants(&self) -> (f64, f64) {
        (self.center, self.scale)
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        (self.shape.eval(x) - self.center) / self.scale
    }

    /// Derivative, defined almost everywhere.
    #[inline]
    pub fn derivative(&self, x: f64) -> f64 {
        self.shape.derivative(x) / self.scale
    }

    /// Points where `σ` or `σ'` is discontinuous.
    pub fn breakpoints(&self) -> Vec<f64> {
        self.shape.breakpoints()
    }

    /// Closed-form dual `σ̂(ρ)` when the shape has one.
    pub fn closed_form_dual(&self, rho: f64) -> Option<f64> {
        let d = self.shape.dual(rho)?;
        let c = self.center;
        Some((d - 2.0 * c * self.shape_mean + c * c) / (self.scale * self.scale))
    }

    /// Closed-form `σ̂'(ρ)` when the shape has one.
    pub fn closed_form_dual_derivative(&self, rho: f64) -> Option<f64> {
        Some(self.shape.dual_derivative(rho)? / (self.scale * self.scale))
    }

    pub fn has_closed_form(&self) -> bool {
        self.shape.dual(0.0).is_some()
    }

    /// Odd, non-decreasing and concave on the positive axis, checked on a
    /// grid. These are the shape hypotheses for the non-unit-norm results.
    pub fn odd_monotone_concave(&self) -> bool {
        let grid: Vec<f64> = (1..=400).map(|i| i as f64 * 0.02).collect();
        let tol = 1e-12;
        let odd = grid.iter().all(|&x| (self.eval(x) + self.eval(-x)).abs() <= tol * (1.0 + self.eval(x).abs()))
            && self.eval(0.0).abs() <= tol;
        let mut prev = self.eval(0.0);
        let mut monotone = true;
        for &x in &grid {
            let v = self.eval(x);
            monotone &= v >= prev - tol;
            prev = v;
        }
        let concave = grid.windows(3).all(|w| {
            let (a, b, c) = (self.eval(w[0]), self.eval(w[1]), self.eval(w[2]));
            a + c - 2.0 * b <= tol
        });
        odd && monotone && concave
    }

    /// Looks up a registry entry. `normrelu:<c>` selects NormReLU with a
    /// custom kink.
    pub fn builtin(name: &str) -> Result<Self> {
        if let Some(rest) = name.strip_prefix("normrelu:") {
            let c: f64 = rest
                .parse()
                .map_err(|_| domain(format!("cannot parse NormReLU kink from '{rest}'")))?;
            return Self::normrelu(c);
        }
        Ok(match name {
            "identity" => Self::raw("identity", Shape::Identity).with_normalized_flag(),
            "relu" => Self::raw("relu", Shape::Relu),
            "relu-normalized" => Self::raw("relu", Shape::Relu).normalized("relu-normalized"),
            "step" => Self::raw("step", Shape::Step),
            "step-sqnorm" => Self::raw("step", Shape::Step).square_normalized("step-sqnorm"),
            "exp" => Self::raw("exp", Shape::Exp),
            "exp-normalized" => Self::raw("exp", Shape::Exp).normalized("exp-normalized"),
            "tanh-normalized" => Self::raw("tanh", Shape::Tanh).normalized("tanh-normalized"),
            "hermite2" => Self::raw("hermite2", Shape::Hermite2).with_normalized_flag(),
            "normrelu" => {
                let mut s = Self::normrelu(NORMRELU_DEFAULT_C)?;
                s.name = "normrelu".into();
                s
            }
            "selu-normalized" => Self::raw("selu", Shape::Selu).normalized("selu-normalized"),
            other => {
                return Err(Error::Domain(format!(
                    "unknown activation '{other}'; known: {}",
                    BUILTIN_NAMES.join(", ")
                )))
            }
        })
    }

    fn with_normalized_flag(mut self) -> Self {
        self.normalized = true;
        self
    }
}

/// Every name accepted by [`ActivationSpec::builtin`] (plus `normrelu:<c>`).
pub const BUILTIN_NAMES: &[&str] = &[
    "identity",
    "relu",
    "relu-normalized",
    "step",
    "step-sqnorm",
    "exp",
    "exp-normalized",
    "tanh-normalized",
    "hermite2",
    "normrelu",
    "selu-normalized",
];

/// The normalized, non-linear registry entries.
pub const NORMALIZED_NONLINEAR: &[&str] = &[
    "relu-normalized",
    "exp-normalized",
    "tanh-normalized",
    "hermite2",
    "normrelu",
    "selu-normalized",
];
