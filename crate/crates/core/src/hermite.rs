//! Orthonormal probabilists' Hermite polynomials, Gaussian quadrature and
//! Hermite expansions of activations.
//!
//! `h_j^γ` denotes the orthonormal basis for `N(0, γ)`: `h_j^γ(x) = h_j(x/√γ)`
//! where `h_j = He_j / √(j!)`. Coefficients of a function against the
//! `N(0, γ)` measure are therefore ordinary coefficients of `u ↦ σ(√γ u)`
//! against `N(0, 1)`, which is how [`expand`] computes them.
//!
//! Two quadrature families are provided. [`gauss_hermite_rule`] is exact for
//! polynomials and converges quickly for analytic integrands. Integrands with
//! a kink or jump converge only like `1/order` under it, so
//! [`QuadratureRule::with_breaks`] builds a composite Gauss–Legendre rule on
//! `[-12, 12]` whose panels are split at the given break points.

use crate::dual::ActivationSpec;
use crate::error::{domain, Error, Result};
use crate::linalg::{tridiagonal_ql, Matrix};
use std::f64::consts::PI;
use std::sync::OnceLock;

/// Largest polynomial index accepted by [`hermite_value`].
pub const MAX_DEGREE: usize = 200;
/// Largest Gauss–Hermite order accepted by [`gauss_hermite_rule`].
pub const MAX_ORDER: usize = 512;
/// Default truncation degree of expansions.
pub const DEFAULT_DEGREE: usize = 60;
/// Default Gauss–Hermite order for smooth activations.
pub const DEFAULT_ORDER: usize = 128;

/// Half-width of the interval used by the composite rule. The standard
/// normal density is below `1e-31` outside it.
const TRUNCATION: f64 = 12.0;
const PANELS: usize = 48;
const PANEL_NODES: usize = 20;

/// `h_j^γ(x)` via the orthonormal three-term recurrence
/// `h_{k+1}(t) = (t h_k(t) − √k h_{k−1}(t)) / √(k+1)` at `t = x/√γ`.
pub fn hermite_value(j: usize, x: f64, gamma: f64) -> Result<f64> {
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(domain(format!("variance must be positive, got {gamma}")));
    }
    if j > MAX_DEGREE {
        return Err(domain(format!("degree {j} exceeds the supported maximum {MAX_DEGREE}")));
    }
    let t = x / gamma.sqrt();
    let (mut prev, mut cur) = (0.0, 1.0);
    for k in 0..j {
        let next = (t * cur - (k as f64).sqrt() * prev) / ((k + 1) as f64).sqrt();
        prev = cur;
        cur = next;
    }
    Ok(cur)
}

/// Fills `out[k] = h_k(t)` for `k = 0..out.len()` (standard basis).
pub fn hermite_values_into(t: f64, out: &mut [f64]) {
    if out.is_empty() {
        return;
    }
    out[0] = 1.0;
    if out.len() > 1 {
        out[1] = t;
    }
    for k in 1..out.len().saturating_sub(1) {
        out[k + 1] = (t * out[k] - (k as f64).sqrt() * out[k - 1]) / ((k + 1) as f64).sqrt();
    }
}

/// Nodes and weights approximating expectations under `N(0, 1)`.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadratureRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Number of nodes.
    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    pub fn expect(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w * f(x)).sum()
    }

    /// Composite Gauss–Legendre rule for `N(0, 1)`, with every panel
    /// boundary in `breaks` honoured. Break points outside the truncation
    /// window are ignored.
    pub fn with_breaks(breaks: &[f64]) -> Self {
        Self::composite(breaks, PANELS, PANEL_NODES)
    }

    /// As [`with_breaks`](Self::with_breaks) with an explicit panel count and
    /// nodes per panel.
    pub fn composite(breaks: &[f64], panels: usize, per_panel: usize) -> Self {
        let (t, wt) = gauss_legendre(per_panel);
        let mut cuts: Vec<f64> = (0..=panels)
            .map(|i| -TRUNCATION + 2.0 * TRUNCATION * i as f64 / panels as f64)
            .collect();
        cuts.extend(breaks.iter().copied().filter(|b| b.abs() < TRUNCATION && b.is_finite()));
        cuts.sort_by(f64::total_cmp);
        cuts.dedup_by(|a, b| (*a - *b).abs() < 1e-14);
        let norm = 1.0 / (2.0 * PI).sqrt();
        let mut nodes = Vec::with_capacity((cuts.len() - 1) * per_panel);
        let mut weights = Vec::with_capacity(nodes.capacity());
        for win in cuts.windows(2) {
            let (a, b) = (win[0], win[1]);
            let half = 0.5 * (b - a);
            let mid = 0.5 * (a + b);
            for (&ti, &wi) in t.iter().zip(&wt) {
                let x = mid + half * ti;
                nodes.push(x);
                weights.push(wi * half * norm * (-0.5 * x * x).exp());
            }
        }
        Self { nodes, weights }
    }
}

/// Gauss–Hermite rule of the given order for `N(0, 1)` by Golub–Welsch: the
/// nodes are the eigenvalues of the Jacobi matrix with off-diagonal `√k`,
/// and each weight is the squared first component of its eigenvector.
///
/// At high orders the outermost weights underflow to zero.
pub fn gauss_hermite_rule(order: usize) -> Result<QuadratureRule> {
    if order == 0 || order > MAX_ORDER {
        return Err(domain(format!("quadrature order must be in 1..={MAX_ORDER}, got {order}")));
    }
    let mut d = vec![0.0; order];
    let mut e: Vec<f64> = (0..order).map(|k| (k as f64).sqrt()).collect();
    let mut z = Matrix::zeros(1, order);
    z[(0, 0)] = 1.0;
    tridiagonal_ql(&mut d, &mut e, &mut z)?;
    let mut pairs: Vec<(f64, f64)> = (0..order).map(|k| (d[k], z[(0, k)] * z[(0, k)])).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    // Symmetrize: the exact rule is symmetric about zero.
    let n = order;
    for k in 0..n / 2 {
        let x = 0.5 * (pairs[n - 1 - k].0 - pairs[k].0);
        let w = 0.5 * (pairs[n - 1 - k].1 + pairs[k].1);
        pairs[k] = (-x, w);
        pairs[n - 1 - k] = (x, w);
    }
    if n % 2 == 1 {
        pairs[n / 2].0 = 0.0;
    }
    let total: f64 = pairs.iter().map(|p| p.1).sum();
    Ok(QuadratureRule {
        nodes: pairs.iter().map(|p| p.0).collect(),
        weights: pairs.iter().map(|p| p.1 / total).collect(),
    })
}

/// Gauss–Legendre nodes and weights on `[-1, 1]` via Newton iteration on
/// the Legendre recurrence.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p_prev, mut p) = (1.0, z);
            for k in 2..=n {
                let next = ((2 * k - 1) as f64 * z * p - (k - 1) as f64 * p_prev) / k as f64;
                p_prev = p;
                p = next;
            }
            dp = n as f64 * (z * p - p_prev) / (z * z - 1.0);
            let dz = p / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

/// Truncated expansion of a function in the orthonormal basis of `N(0, γ)`.
#[derive(Clone, Debug, PartialEq)]
pub struct HermiteExpansion {
    /// `a_0 ..= a_N`.
    pub coefficients: Vec<f64>,
    pub degree: usize,
    /// `max(0, E[σ²] − Σ a_i²)`, the energy beyond degree `N`.
    pub tail_mass: f64,
    pub base_variance: f64,
}

impl HermiteExpansion {
    /// `Σ a_i h_i^γ(x)`.
    pub fn reconstruct(&self, x: f64) -> f64 {
        let mut h = vec![0.0; self.degree + 1];
        hermite_values_into(x / self.base_variance.sqrt(), &mut h);
        h.iter().zip(&self.coefficients).map(|(a, b)| a * b).sum()
    }

    pub fn squared(&self) -> Vec<f64> {
        self.coefficients.iter().map(|a| a * a).collect()
    }
}

/// Coefficients of `f` against `N(0, γ)` using `rule`, which must be a rule
/// for the standard normal variable `u = z/√γ`.
pub fn expand_fn(
    f: impl Fn(f64) -> f64,
    degree: usize,
    gamma: f64,
    rule: &QuadratureRule,
) -> Result<HermiteExpansion> {
    if !(gamma > 0.0) {
        return Err(domain(format!("variance must be positive, got {gamma}")));
    }
    if degree > MAX_DEGREE {
        return Err(domain(format!("degree {degree} exceeds the supported maximum {MAX_DEGREE}")));
    }
    let s = gamma.sqrt();
    let mut coeffs = vec![0.0; degree + 1];
    let mut h = vec![0.0; degree + 1];
    let mut energy = 0.0;
    for (&u, &w) in rule.nodes().iter().zip(rule.weights()) {
        let v = f(s * u);
        if !v.is_finite() {
            return Err(Error::Numeric(format!("function is not finite at node {}", s * u)));
        }
        energy += w * v * v;
        hermite_values_into(u, &mut h);
        for (c, hk) in coeffs.iter_mut().zip(&h) {
            *c += w * v * hk;
        }
    }
    let captured: f64 = coeffs.iter().map(|a| a * a).sum();
    Ok(HermiteExpansion {
        coefficients: coeffs,
        degree,
        tail_mass: (energy - captured).max(0.0),
        base_variance: gamma,
    })
}

/// Expansion of an activation in the `N(0, γ)` basis with an explicit rule.
pub fn expand(
    sigma: &ActivationSpec,
    degree: usize,
    gamma: f64,
    rule: &QuadratureRule,
) -> Result<HermiteExpansion> {
    expand_fn(|x| sigma.eval(x), degree, gamma, rule)
}

/// Picks a rule suited to `sigma` at variance `γ`: composite with the
/// activation's break points scaled by `1/√γ`, or Gauss–Hermite of the
/// default order when the activation is smooth.
pub fn rule_for(sigma: &ActivationSpec, gamma: f64) -> QuadratureRule {
    let breaks = sigma.breakpoints();
    if breaks.is_empty() {
        default_gauss_hermite().clone()
    } else {
        let s = gamma.sqrt();
        let scaled: Vec<f64> = breaks.iter().map(|b| b / s).collect();
        QuadratureRule::with_breaks(&scaled)
    }
}

pub(crate) fn default_gauss_hermite() -> &'static QuadratureRule {
    static RULE: OnceLock<QuadratureRule> = OnceLock::new();
    RULE.get_or_init(|| gauss_hermite_rule(DEFAULT_ORDER).expect("default order is valid"))
}

/// `E[f(z₁) g(z₂)]` for `(z₁, z₂) ~ N(0, [[c11, c12], [c12, c22]])` by nested
/// one-dimensional rules. Break points of `f` and `g` are given in the
/// coordinates of `z₁` and `z₂`; the inner rule is rebuilt at every outer
/// node so that `g`'s break points stay on panel boundaries.
pub fn bivariate_expectation(
    f: impl Fn(f64) -> f64,
    f_breaks: &[f64],
    g: impl Fn(f64) -> f64,
    g_breaks: &[f64],
    cov: [f64; 3],
) -> Result<f64> {
    let [c11, c12, c22] = cov;
    if !(c11 > 0.0 && c22 > 0.0) {
        return Err(domain("variances must be positive"));
    }
    let (s1, s2) = (c11.sqrt(), c22.sqrt());
    let r = c12 / (s1 * s2);
    if r.abs() > 1.0 + 1e-12 {
        return Err(domain(format!("covariance is not positive semidefinite (correlation {r})")));
    }
    let r = r.clamp(-1.0, 1.0);
    let c = (1.0 - r * r).max(0.0).sqrt();
    let smooth = f_breaks.is_empty() && g_breaks.is_empty();
    let gh = default_gauss_hermite();

    if c < 1e-12 {
        // Degenerate: z₂ = s2 r u.
        let mut breaks: Vec<f64> = f_breaks.iter().map(|b| b / s1).collect();
        breaks.extend(g_breaks.iter().map(|b| b / (s2 * r)));
        let rule = if smooth { gh.clone() } else { QuadratureRule::with_breaks(&breaks) };
        return Ok(rule.expect(|u| f(s1 * u) * g(s2 * r * u)));
    }

    let outer_breaks: Vec<f64> = f_breaks.iter().map(|b| b / s1).collect();
    let outer = if smooth { gh.clone() } else { QuadratureRule::with_breaks(&outer_breaks) };
    let mut total = 0.0;
    let mut inner_breaks = Vec::with_capacity(g_breaks.len());
    for (&u, &wu) in outer.nodes().iter().zip(outer.weights()) {
        let fu = f(s1 * u);
        if fu == 0.0 {
            continue;
        }
        let inner_sum = if g_breaks.is_empty() {
            gh.expect(|w| g(s2 * (r * u + c * w)))
        } else {
            inner_breaks.clear();
            inner_breaks.extend(g_breaks.iter().map(|b| (b / s2 - r * u) / c));
            QuadratureRule::composite(&inner_breaks, 32, 16).expect(|w| g(s2 * (r * u + c * w)))
        };
        total += wu * fu * inner_sum;
    }
    Ok(total)
}
