//! Correlation recursions beyond the unit-norm, centred setting: inputs with
//! arbitrary norms, activations with non-zero mean, and NormReLU.

use super::bounds::{bound_b, l0};
use crate::dual::{dot_product_map, ActivationSpec, DualActivation, NormRelu, NormTransferMap};
use crate::error::{domain, Error, Result};
use serde::Serialize;

/// Layer-by-layer norms and correlation of two inputs, with the envelopes
/// that apply once the norms have settled.
#[derive(Clone, Debug, Serialize)]
pub struct GeneralNormTrace {
    pub gamma_x: Vec<f64>,
    pub gamma_y: Vec<f64>,
    pub rho: Vec<f64>,
    pub alpha: f64,
    pub mu: f64,
    pub delta: f64,
    /// Depth after which the correlation envelope applies.
    pub l_hat: f64,
    /// `B_{μ/2}(l − L̂, δ)` for `l ≥ L̂`, NaN before.
    pub corr_bound: Vec<f64>,
    /// `(1 − α)^l · max(|γx − 1|, |γy − 1|)`.
    pub norm_bound: Vec<f64>,
    /// Outcome of the odd / monotone / concave grid check.
    pub hypotheses_hold: bool,
}

impl GeneralNormTrace {
    pub fn norms_within_bound(&self) -> bool {
        (0..self.rho.len()).all(|l| {
            let dev = (self.gamma_x[l] - 1.0).abs().max((self.gamma_y[l] - 1.0).abs());
            dev <= self.norm_bound[l] + 1e-9
        })
    }

    pub fn correlation_within_bound(&self) -> bool {
        self.rho
            .iter()
            .zip(&self.corr_bound)
            .all(|(r, b)| b.is_nan() || r.abs() <= b + 1e-9)
    }

    /// `|ρ_{l+1}| ≤ |ρ_l|` at every layer.
    pub fn correlation_non_increasing(&self) -> bool {
        self.rho.windows(2).all(|w| w[1].abs() <= w[0].abs() + 1e-12)
    }
}

/// Runs `γ ← σ̂_l(γ)` for both inputs together with the normalized
/// correlation `ρ ← σ̂_c(γx, γy, ρ)/√(σ̂_l(γx) σ̂_l(γy))`.
pub fn general_norm_propagate(
    gx: f64,
    gy: f64,
    rho: f64,
    sigma: &ActivationSpec,
    depth: usize,
) -> Result<GeneralNormTrace> {
    if !(gx >= 0.5 && gy >= 0.5) {
        return Err(domain(format!("squared norms ({gx}, {gy}) must be at least 0.5")));
    }
    if !(rho.abs() < 1.0) {
        return Err(domain(format!("correlation {rho} must lie strictly inside (-1, 1)")));
    }
    let map = NormTransferMap::new(sigma.clone());
    let dual = DualActivation::new(sigma.clone())?;
    let alpha = map.alpha();
    let mu = dual.mu();
    let delta = 1.0 - rho.abs();
    let spread0 = (gx - 1.0).abs().max((gy - 1.0).abs());
    let l_hat = if mu > 0.0 && alpha > 0.0 {
        ((4.0 * spread0.max(mu / 4.0)) / mu).ln() / alpha
    } else {
        f64::INFINITY
    };

    let (mut x, mut y, mut r) = (gx, gy, rho);
    let mut trace = GeneralNormTrace {
        gamma_x: vec![x],
        gamma_y: vec![y],
        rho: vec![r],
        alpha,
        mu,
        delta,
        l_hat,
        corr_bound: Vec::with_capacity(depth + 1),
        norm_bound: Vec::with_capacity(depth + 1),
        hypotheses_hold: map.hypotheses_hold(),
    };
    for _ in 0..depth {
        let unit = (x - 1.0).abs() <= 1e-12 && (y - 1.0).abs() <= 1e-12;
        if unit {
            r = dual.eval_unchecked(r).clamp(-1.0, 1.0);
        } else {
            let c = dot_product_map(sigma, x, y, r)?;
            let (nx, ny) = (map.value(x), map.value(y));
            r = (c / (nx * ny).sqrt()).clamp(-1.0, 1.0);
            x = nx;
            y = ny;
        }
        trace.gamma_x.push(x);
        trace.gamma_y.push(y);
        trace.rho.push(r);
    }
    for l in 0..=depth {
        let lf = l as f64;
        trace.norm_bound.push((1.0 - alpha).max(0.0).powi(l as i32) * spread0);
        let b = if mu > 0.0 && lf >= l_hat {
            bound_b(mu / 2.0, lf - l_hat, delta)?
        } else {
            f64::NAN
        };
        trace.corr_bound.push(b);
    }
    Ok(trace)
}

/// Convergence of `σ̂^{(l)}(ρ₀)` to the smallest fixed point `ρ̄` for a
/// square-normalized activation.
#[derive(Clone, Debug, Serialize)]
pub struct UncenteredTrace {
    pub rho_bar: f64,
    pub derivative_at_fixed_point: f64,
    pub mu_tilde: f64,
    pub values: Vec<f64>,
    /// `|σ̂^{(l)}(ρ₀) − ρ̄|`.
    pub errors: Vec<f64>,
    /// Depth after which `rate_bound` applies.
    pub l0: u64,
    /// Envelope for `errors`, NaN before `l0`; all NaN in the saturating case.
    pub rate_bound: Vec<f64>,
    /// Set when `ρ̄ = 1` and `σ̂'(1) = 1`; see [`saturation_depth`].
    pub saturating: bool,
}

impl UncenteredTrace {
    pub fn within_bound(&self) -> bool {
        self.errors
            .iter()
            .zip(&self.rate_bound)
            .all(|(e, b)| b.is_nan() || *e <= b + 1e-9)
    }
}

pub fn uncentered_convergence(d: &DualActivation, rho0: f64, depth: usize) -> Result<UncenteredTrace> {
    let fp = d.fixed_point()?;
    if (d.second_moment() - 1.0).abs() > 1e-6 {
        return Err(domain(format!("'{}' is not square-normalized", d.name())));
    }
    if !(rho0.abs() < 1.0) {
        return Err(domain(format!("starting correlation {rho0} must lie strictly inside (-1, 1)")));
    }
    let delta = 1.0 - rho0.abs();
    let rho_bar = fp.rho_bar;
    let mu_tilde = d.mu_tilde();
    let s0 = d.eval_unchecked(0.0);

    let mut values = Vec::with_capacity(depth + 1);
    let mut r = rho0;
    values.push(r);
    for _ in 0..depth {
        r = d.eval_unchecked(r).clamp(-1.0, 1.0);
        values.push(r);
    }
    let errors: Vec<f64> = values.iter().map(|v| (v - rho_bar).abs()).collect();

    let saturating = rho_bar == 1.0 && (fp.derivative - 1.0).abs() < 1e-9;
    let (l0v, rate_bound) = if saturating {
        (0, vec![f64::NAN; depth + 1])
    } else if s0 <= 1e-15 {
        // Centred case: the envelope is the ordinary B(l, δ).
        let mu = d.mu();
        let l0v = l0(mu, delta)?;
        let b = (0..=depth).map(|l| bound_b(mu, l as f64, delta)).collect::<Result<Vec<_>>>()?;
        (l0v, b)
    } else {
        let gap = 1.0 - rho_bar;
        let first = ((gap / (2.0 * delta)).ln() / (1.0 + mu_tilde * gap / 2.0).ln()).ceil().max(0.0);
        let second = (1.0 / s0).ceil();
        let l0v = first.max(second) as u64;
        let c = (1.0 - mu_tilde * gap / 2.0).max(fp.derivative);
        let b = (0..=depth as u64)
            .map(|l| {
                if l >= l0v {
                    c.powi((l - l0v) as i32) * (1.0 + rho_bar) / 2.0
                } else {
                    f64::NAN
                }
            })
            .collect();
        (l0v, b)
    };
    Ok(UncenteredTrace {
        rho_bar,
        derivative_at_fixed_point: fp.derivative,
        mu_tilde,
        values,
        errors,
        l0: l0v,
        rate_bound,
        saturating,
    })
}

/// Depth needed to push a correlation above `1 − ε` when `ρ̄ = 1` and
/// `σ̂'(1) = 1`, against the guaranteed depth.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct SaturationReport {
    pub eps: f64,
    /// First `l` with `σ̂^{(l)}(ρ₀) ≥ 1 − ε`, if reached within the search cap.
    pub measured_layers: Option<u64>,
    /// `max(⌈log(2/ε)/−log(1 − εμ̃/2)⌉, ⌈1/σ̂(0)⌉)`.
    pub bound_layers: u64,
}

pub fn saturation_depth(d: &DualActivation, rho0: f64, eps: f64) -> Result<SaturationReport> {
    if !(eps > 0.0 && eps < 0.5) {
        return Err(domain(format!("ε = {eps} outside (0, 1/2)")));
    }
    let fp = d.fixed_point()?;
    if !(fp.rho_bar == 1.0 && (fp.derivative - 1.0).abs() < 1e-9) {
        return Err(Error::Precondition(format!(
            "'{}' has ρ̄ = {} and σ̂'(ρ̄) = {}; the saturating regime needs both equal to 1",
            d.name(),
            fp.rho_bar,
            fp.derivative
        )));
    }
    let s0 = d.eval_unchecked(0.0);
    let mu_tilde = d.mu_tilde();
    let a = ((2.0 / eps).ln() / -(1.0 - eps * mu_tilde / 2.0).ln()).ceil();
    let bound_layers = a.max((1.0 / s0).ceil()) as u64;
    let cap = bound_layers.saturating_mul(4).max(1000);
    let mut r = rho0.clamp(-1.0, 1.0);
    let mut measured = None;
    for l in 0..=cap {
        if r >= 1.0 - eps {
            measured = Some(l);
            break;
        }
        r = d.eval_unchecked(r).clamp(-1.0, 1.0);
    }
    Ok(SaturationReport { eps, measured_layers: measured, bound_layers })
}

/// NormReLU correlation after `L` layers against
/// `B_{μ/2}(L − L̂, δ − δ') + δ'ε`.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct NormReluBoundReport {
    pub measured_rho: f64,
    pub bound: f64,
    pub l_hat: f64,
    pub delta_prime: f64,
    pub alpha: f64,
    pub holds: bool,
}

pub fn normrelu_correlation_bound(
    c: f64,
    gx: f64,
    gy: f64,
    rho: f64,
    depth: usize,
    eps: f64,
) -> Result<NormReluBoundReport> {
    for g in [gx, gy] {
        if !(0.5..=2.0).contains(&g) {
            return Err(domain(format!("squared norm {g} outside [0.5, 2]")));
        }
    }
    if !(eps > 0.0) {
        return Err(domain(format!("ε = {eps} must be positive")));
    }
    let nr = NormRelu::new(c)?;
    let spec = ActivationSpec::normrelu(c)?;
    let dual = DualActivation::new(spec.clone())?;
    let delta = 1.0 - rho.abs();
    let delta_prime = nr.delta_prime();
    if !(delta > delta_prime) {
        return Err(Error::Precondition(format!(
            "separation {delta} does not exceed δ' = {delta_prime}"
        )));
    }
    let l_hat = nr.l_hat(eps);
    let mu = nr.constants.mu;

    let (mut x, mut y, mut r) = (gx, gy, rho);
    for _ in 0..depth {
        if (x - 1.0).abs() <= 1e-12 && (y - 1.0).abs() <= 1e-12 {
            r = dual.eval_unchecked(r).clamp(-1.0, 1.0);
        } else {
            let cov = dot_product_map(&spec, x, y, r)?;
            let (nx, ny) = (nr.length_map(x), nr.length_map(y));
            r = (cov / (nx * ny).sqrt()).clamp(-1.0, 1.0);
            x = nx;
            y = ny;
        }
    }
    let bound = if depth as f64 >= l_hat {
        bound_b(mu / 2.0, depth as f64 - l_hat, delta - delta_prime)? + delta_prime * eps
    } else {
        f64::NAN
    };
    Ok(NormReluBoundReport {
        measured_rho: r,
        bound,
        l_hat,
        delta_prime,
        alpha: nr.alpha(),
        holds: !bound.is_nan() && r.abs() <= bound + 1e-9,
    })
}
