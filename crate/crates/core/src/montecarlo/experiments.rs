use super::network::{check_input, sample_network_trial, NetworkConfig};
use super::{empirical_kernel, empirical_ntk, TrialSummary};
use crate::conditioning::bounds::{bound_b, l0};
use crate::conditioning::{ntk_matrix, propagate_kernel, GramMatrix};
use crate::dual::{ActivationSpec, DualActivation, Shape};
use crate::error::{domain, Error, Result};
use crate::linalg::{dot, sym_eigenvalues};
use crate::rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelKind {
    Features,
    Tangent,
}

/// Finite-width kernels against their infinite-width limit.
#[derive(Clone, Debug, Serialize)]
pub struct ConcentrationReport {
    pub kind: KernelKind,
    pub width: usize,
    pub depth: usize,
    /// Per trial, the mean of `|K_ij − K̄_ij|` over `i ≤ j`.
    pub mean_abs_error: TrialSummary,
    /// Row-major upper triangle `(i, j, summary of K_ij, K̄_ij)`.
    pub entries: Vec<(usize, usize, TrialSummary, f64)>,
    /// Largest `|mean K_ij − K̄_ij|` in standard errors.
    pub max_z: f64,
}

/// Samples `trials` networks and compares their kernel (or tangent kernel)
/// on `xs` with the infinite-width value. Trials run one after another;
/// each draw is parallel across rows.
pub fn kernel_concentration(
    cfg: &NetworkConfig,
    xs: &[Vec<f64>],
    trials: usize,
    kind: KernelKind,
) -> Result<ConcentrationReport> {
    if trials < 2 {
        return Err(domain("need at least two trials for a standard error"));
    }
    let gram = GramMatrix::from_vectors(xs)?;
    let dual = DualActivation::new(cfg.activation.clone())?;
    let oracle = match kind {
        KernelKind::Features => propagate_kernel(&gram, &dual, cfg.depth)?.into_matrix(),
        KernelKind::Tangent => ntk_matrix(&gram, &dual, cfg.depth)?,
    };
    let n = xs.len();
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i..n).map(move |j| (i, j))).collect();
    let mut per_entry = vec![Vec::with_capacity(trials); pairs.len()];
    let mut errors = Vec::with_capacity(trials);
    for t in 0..trials {
        let net = sample_network_trial(cfg, t as u64)?;
        let k = match kind {
            KernelKind::Features => empirical_kernel(&net, xs)?,
            KernelKind::Tangent => empirical_ntk(&net, xs)?,
        };
        let mut err = 0.0;
        for (slot, &(i, j)) in per_entry.iter_mut().zip(&pairs) {
            slot.push(k.get(i, j));
            err += (k.get(i, j) - oracle[(i, j)]).abs();
        }
        errors.push(err / pairs.len() as f64);
    }
    let entries: Vec<_> = pairs
        .iter()
        .zip(&per_entry)
        .map(|(&(i, j), v)| (i, j, TrialSummary::from_samples(v), oracle[(i, j)]))
        .collect();
    let max_z = entries
        .iter()
        .map(|(_, _, s, target)| {
            if s.std_error > 0.0 {
                s.z_score(*target)
            } else if s.mean == *target {
                0.0
            } else {
                f64::INFINITY
            }
        })
        .fold(0.0, f64::max);
    Ok(ConcentrationReport {
        kind,
        width: cfg.width,
        depth: cfg.depth,
        mean_abs_error: TrialSummary::from_samples(&errors),
        entries,
        max_z,
    })
}

/// Correlation of two inputs across depth, with the infinite-width envelope.
#[derive(Clone, Debug, Serialize)]
pub struct DecayReport {
    /// Summary of `ρ_h` for `h = 0..=L`.
    pub rho: Vec<TrialSummary>,
    /// `B(h, δ)` for `δ = 1 − |x·y|`; all ones when `δ = 0`.
    pub bound: Vec<f64>,
    pub mu: f64,
    pub delta: f64,
    pub l0: Option<u64>,
    /// `exp` of the least-squares slope of `log|mean ρ_h|` over depths past
    /// `L₀` where the mean exceeds four standard errors.
    pub fitted_rate: Option<f64>,
    /// `1 − μ/4`.
    pub reference_rate: f64,
}

impl DecayReport {
    /// `|mean ρ_h| ≤ B(h, δ) + k·stdError` at every depth.
    pub fn within_envelope(&self, k: f64) -> bool {
        self.rho
            .iter()
            .zip(&self.bound)
            .all(|(s, b)| s.mean.abs() <= b + k * s.std_error.max(0.0) + 1e-12)
    }
}

/// One trial of the two-input recursion. Given the Gram `[[a, c], [c, b]]`
/// of the two layer inputs, the pre-activations `(W h_x, W h_y)` are `m`
/// independent draws from `N(0, [[a, c], [c, b]])`; sampling them directly
/// has exactly the law of the full network on this pair at `O(m)` cost per
/// layer.
fn pair_trial(cfg: &NetworkConfig, x: &[f64], y: &[f64], trial: u64) -> Result<Vec<f64>> {
    let m = cfg.width;
    let scale = 1.0 / m as f64;
    let (mut a, mut b, mut c) = (dot(x, x), dot(y, y), dot(x, y));
    let mut rhos = Vec::with_capacity(cfg.depth + 1);
    rhos.push(c / (a * b).sqrt());
    for h in 1..=cfg.depth {
        if !(a > 0.0 && b > 0.0) {
            return Err(Error::Precondition("a layer output vanished".into()));
        }
        let sa = a.sqrt();
        let slope = c / sa;
        let resid = (b - slope * slope).max(0.0).sqrt();
        let mut rng = rng::stream(cfg.seed, &[rng::domain::PAIR_LAW, trial, h as u64], 0);
        let (mut na, mut nb, mut nc) = (0.0, 0.0, 0.0);
        for _ in 0..m {
            let u: f64 = StandardNormal.sample(&mut rng);
            let w: f64 = StandardNormal.sample(&mut rng);
            let fx = cfg.activation.eval(sa * u);
            let fy = cfg.activation.eval(slope * u + resid * w);
            na += fx * fx;
            nb += fy * fy;
            nc += fx * fy;
        }
        let (na, nb, nc) = (na * scale, nb * scale, nc * scale);
        if cfg.normalize_layers {
            if !(na > 0.0 && nb > 0.0) {
                return Err(Error::Precondition("a layer output vanished before projection".into()));
            }
            c = nc / (na * nb).sqrt();
            a = 1.0;
            b = 1.0;
        } else {
            a = na;
            b = nb;
            c = nc;
        }
        rhos.push(c / (a * b).sqrt());
    }
    Ok(rhos)
}

/// Normalized correlation `ρ_h` of `x` and `y` at every depth, averaged over
/// independent networks. No weights are stored, so the memory budget does
/// not apply.
pub fn correlation_decay_experiment(cfg: &NetworkConfig, x: &[f64], y: &[f64], trials: usize) -> Result<DecayReport> {
    cfg.validate_shape()?;
    check_input(cfg, x)?;
    check_input(cfg, y)?;
    if trials == 0 {
        return Err(domain("need at least one trial"));
    }
    let runs = (0..trials as u64)
        .into_par_iter()
        .map(|t| pair_trial(cfg, x, y, t))
        .collect::<Result<Vec<_>>>()?;
    let rho: Vec<TrialSummary> = (0..=cfg.depth)
        .map(|h| TrialSummary::from_samples(&runs.iter().map(|r| r[h]).collect::<Vec<_>>()))
        .collect();
    let dual = DualActivation::new(cfg.activation.clone())?;
    let mu = dual.mu();
    let delta = (1.0 - (dot(x, y) / (dot(x, x) * dot(y, y)).sqrt()).abs()).max(0.0);
    let (bound, l0v) = if delta > 0.0 && mu > 0.0 {
        let b = (0..=cfg.depth).map(|h| bound_b(mu, h as f64, delta.min(1.0))).collect::<Result<Vec<_>>>()?;
        (b, Some(l0(mu, delta.min(1.0))?))
    } else {
        (vec![1.0; cfg.depth + 1], None)
    };
    let fitted_rate = l0v.and_then(|l| {
        let pts: Vec<(f64, f64)> = rho
            .iter()
            .enumerate()
            .filter(|(h, s)| *h as u64 > l && *h > 0 && s.mean.abs() > 4.0 * s.std_error)
            .map(|(h, s)| (h as f64, s.mean.abs().ln()))
            .collect();
        (pts.len() >= 2).then(|| {
            let n = pts.len() as f64;
            let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
            let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
            let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
            let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
            (sxy / sxx).exp()
        })
    });
    Ok(DecayReport { rho, bound, mu, delta, l0: l0v, fitted_rate, reference_rate: 1.0 - mu / 4.0 })
}

/// Smallest eigenvalue of `Φ(X)ᵀΦ(X)` for one layer of un-normalized ReLU
/// features of width `m`, with weights from `(seed, trial)`.
pub fn min_singular_value(xs: &[Vec<f64>], m: usize, seed: u64, trial: u64) -> Result<f64> {
    let d = xs.first().map(Vec::len).ok_or_else(|| domain("need at least one input"))?;
    let cfg = NetworkConfig::new(d, m, 1, ActivationSpec::raw("relu", Shape::Relu), seed);
    let net = sample_network_trial(&cfg, trial)?;
    let k = empirical_kernel(&net, xs)?;
    Ok(sym_eigenvalues(k.entries())?[0])
}

#[derive(Clone, Debug, Serialize)]
pub struct SigmaMinReport {
    pub n: usize,
    pub width: usize,
    pub delta: f64,
    pub per_trial: Vec<f64>,
    pub summary: TrialSummary,
    pub min: f64,
    /// `min / (δ^{3/2}/n³)`.
    pub ratio: f64,
    pub all_positive: bool,
}

/// Attempts per input before rejection sampling gives up.
const REJECTION_BUDGET: usize = 100_000;

/// Random unit vectors in `R^{n+1}` with pairwise `|x_i · x_j| ≤ 1 − δ`.
fn separated_inputs(n: usize, delta: f64, seed: u64, trial: u64) -> Result<Vec<Vec<f64>>> {
    let dim = n + 1;
    let mut r = rng::stream(seed, &[rng::domain::INPUTS, trial], 0);
    let mut xs: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut attempts = 0;
    while xs.len() < n {
        attempts += 1;
        if attempts > REJECTION_BUDGET * n {
            return Err(Error::Config(format!(
                "could not place {n} unit vectors with separation {delta} in {attempts} draws"
            )));
        }
        let cand = rng::unit_vector(&mut r, dim);
        if xs.iter().all(|x| dot(x, &cand).abs() <= 1.0 - delta) {
            xs.push(cand);
        }
    }
    Ok(xs)
}

pub fn one_layer_min_singular_experiment(
    n: usize,
    m: usize,
    delta: f64,
    trials: usize,
    seed: u64,
) -> Result<SigmaMinReport> {
    if n == 0 || trials == 0 {
        return Err(domain("n and trials must be positive"));
    }
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(domain(format!("separation {delta} outside (0, 1]")));
    }
    let per_trial = (0..trials as u64)
        .into_par_iter()
        .map(|t| {
            let xs = separated_inputs(n, delta, seed, t)?;
            min_singular_value(&xs, m, seed, t)
        })
        .collect::<Result<Vec<_>>>()?;
    let min = per_trial.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(SigmaMinReport {
        n,
        width: m,
        delta,
        summary: TrialSummary::from_samples(&per_trial),
        min,
        ratio: min / (delta.powf(1.5) / (n as f64).powi(3)),
        all_positive: min > 0.0,
        per_trial,
    })
}

/// Largest elementwise gaps between raw and normalized activations after
/// batch normalization and after layer normalization.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct BnReport {
    pub batch_norm: f64,
    pub layer_norm: f64,
    pub max_abs_deviation: f64,
}

/// `(t − mean t)/std t` with the population standard deviation.
fn standardize(t: &[f64]) -> Result<Vec<f64>> {
    let n = t.len() as f64;
    let mean = t.iter().sum::<f64>() / n;
    let var = t.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let scale = t.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if !(var.sqrt() > 1e-12 * scale) {
        return Err(Error::Precondition("batch has zero variance; normalization is undefined".into()));
    }
    let sd = var.sqrt();
    Ok(t.iter().map(|v| (v - mean) / sd).collect())
}

/// `batch` holds `b` pre-activation vectors of length `m`, and `w` is one
/// unit of the next layer. The normalized activation is `(σ − E σ)/sd σ`.
pub fn bn_invariance_check(sigma: &ActivationSpec, batch: &[Vec<f64>], w: &[f64]) -> Result<BnReport> {
    let m = w.len();
    if batch.len() < 2 || m == 0 || batch.iter().any(|x| x.len() != m) {
        return Err(domain("need at least two batch vectors, each as long as the weight vector"));
    }
    let tilde = if sigma.is_normalized() {
        sigma.clone()
    } else {
        ActivationSpec::raw(sigma.name(), sigma.shape().clone()).normalized(format!("{}-normalized", sigma.name()))
    };
    let scale = 1.0 / (m as f64).sqrt();
    let unit = |f: &ActivationSpec| -> Result<Vec<f64>> {
        let t: Vec<f64> = batch.iter().map(|x| x.iter().zip(w).map(|(xi, wi)| wi * f.eval(*xi)).sum::<f64>() * scale).collect();
        standardize(&t)
    };
    let gap = |a: &[f64], b: &[f64]| a.iter().zip(b).fold(0.0f64, |acc, (p, q)| acc.max((p - q).abs()));
    let batch_norm = gap(&unit(sigma)?, &unit(&tilde)?);
    let mut layer_norm = 0.0f64;
    for x in batch {
        let raw: Vec<f64> = x.iter().map(|v| sigma.eval(*v)).collect();
        let norm: Vec<f64> = x.iter().map(|v| tilde.eval(*v)).collect();
        layer_norm = layer_norm.max(gap(&standardize(&raw)?, &standardize(&norm)?));
    }
    Ok(BnReport { batch_norm, layer_norm, max_abs_deviation: batch_norm.max(layer_norm) })
}
