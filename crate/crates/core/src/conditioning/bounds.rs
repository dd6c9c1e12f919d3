use crate::error::{domain, Result};
use serde::Serialize;

fn check(nu: f64, delta: f64) -> Result<()> {
    if !(nu > 0.0 && nu <= 1.0) {
        return Err(domain(format!("rate parameter {nu} outside (0, 1]")));
    }
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(domain(format!("separation {delta} outside (0, 1]")));
    }
    Ok(())
}

/// `max(⌈log(1/(2δ)) / log(1 + ν/2)⌉, 0)`.
pub fn l0(nu: f64, delta: f64) -> Result<u64> {
    check(nu, delta)?;
    let v = ((1.0 / (2.0 * delta)).ln() / (1.0 + nu / 2.0).ln()).ceil();
    Ok(v.max(0.0) as u64)
}

/// The piecewise off-diagonal envelope `B_ν(L, δ)`. `L` may be fractional.
pub fn bound_b(nu: f64, depth: f64, delta: f64) -> Result<f64> {
    let l0 = l0(nu, delta)? as f64;
    if depth < 0.0 {
        return Err(domain(format!("depth {depth} is negative")));
    }
    Ok(if depth <= l0 {
        1.0 - delta * (1.0 + nu / 2.0).powf(depth)
    } else {
        0.5 * (1.0 - nu / 2.0).powf(depth - l0)
    })
}

/// Depth thresholds for a given non-linearity, separation and sample count.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BoundParams {
    pub nu: f64,
    pub delta: f64,
    pub n: usize,
    pub l0: u64,
    /// Depth after which the kernel condition-number bound applies.
    pub l1: u64,
    /// Depth after which the tangent-kernel condition-number bound applies.
    pub l2: u64,
}

pub fn depth_thresholds(mu: f64, delta: f64, n: usize) -> Result<BoundParams> {
    if n == 0 {
        return Err(domain("need at least one input"));
    }
    let l0 = l0(mu, delta)?;
    let rate = -(1.0 - mu / 2.0).ln();
    let l1 = ((n as f64).ln() / rate).ceil() as u64 + l0;
    let l2 = (2.0 * (2.0 * n as f64).ln() / rate).ceil() as u64 + 2 * l0;
    Ok(BoundParams { nu: mu, delta, n, l0, l1, l2 })
}

impl BoundParams {
    pub fn b(&self, depth: f64) -> f64 {
        bound_b(self.nu, depth, self.delta).expect("parameters validated at construction")
    }

    /// `1 + 2n(1 − μ/2)^{L − L₁}`, valid for `L ≥ L₁` under separation.
    pub fn kappa_separation(&self, depth: u64) -> Option<f64> {
        (depth >= self.l1).then(|| {
            1.0 + 2.0 * self.n as f64 * (1.0 - self.nu / 2.0).powi((depth - self.l1) as i32)
        })
    }

    /// `1 + (n/δ)(1 + μ/2)^{−L}` under non-singularity with `λ_min ≥ δ`.
    pub fn kappa_nonsingular(&self, depth: u64) -> f64 {
        1.0 + self.n as f64 / self.delta * (1.0 + self.nu / 2.0).powi(-(depth as i32))
    }

    /// `2B(L/2, δ)`, the tangent-kernel off-diagonal envelope, valid for `L ≥ 2L₀`.
    pub fn ntk_ratio(&self, depth: u64) -> Option<f64> {
        (depth >= 2 * self.l0).then(|| 2.0 * self.b(depth as f64 / 2.0))
    }

    /// `1 + 4n(1 − μ/2)^{L/2 − L₂}`, valid for `L ≥ L₂` under separation.
    pub fn ntk_kappa_separation(&self, depth: u64) -> Option<f64> {
        (depth >= self.l2).then(|| {
            let e = depth as f64 / 2.0 - self.l2 as f64;
            1.0 + 4.0 * self.n as f64 * (1.0 - self.nu / 2.0).powf(e)
        })
    }

    /// `1 + (2n/δ)(1 + μ/2)^{−L/2}`, valid for `L ≥ 4L₀` under non-singularity.
    pub fn ntk_kappa_nonsingular(&self, depth: u64) -> Option<f64> {
        (depth >= 4 * self.l0).then(|| {
            1.0 + 2.0 * self.n as f64 / self.delta * (1.0 + self.nu / 2.0).powf(-(depth as f64) / 2.0)
        })
    }
}
