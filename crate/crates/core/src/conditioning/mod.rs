//! Limiting kernel and tangent-kernel matrices of deep networks, their
//! spectra, and depth profiles that compare measured conditioning against
//! the closed-form envelopes in [`bounds`].

pub mod bounds;
mod general;
mod gram;

pub use bounds::{bound_b, depth_thresholds, l0, BoundParams};
pub use general::{
    general_norm_propagate, normrelu_correlation_bound, saturation_depth, uncentered_convergence, GeneralNormTrace,
    NormReluBoundReport, SaturationReport, UncenteredTrace,
};
pub use gram::{synthetic_inputs, GramMatrix, SyntheticInputs, CLAMP_SLACK};

use crate::dual::DualActivation;
use crate::error::{domain, Error, Result};
use crate::linalg::{sym_eigenvalues, Matrix};
use rayon::prelude::*;
use serde::Serialize;

/// Slack added to every bound comparison.
pub const BOUND_SLACK: f64 = 1e-9;

/// Eigenvalue summary of a symmetric matrix.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Spectrum {
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    pub lambda_min: f64,
    pub lambda_max: f64,
    /// `λ_max/λ_min`, or infinity when `λ_min ≤ 0`.
    pub kappa: f64,
    /// Set when `λ_min ≤ 0`.
    pub degenerate: bool,
}

pub fn spectrum(k: &Matrix) -> Result<Spectrum> {
    if k.rows() == 0 {
        return Err(domain("empty matrix has no spectrum"));
    }
    let eigenvalues = sym_eigenvalues(k)?;
    let lambda_min = eigenvalues[0];
    let lambda_max = *eigenvalues.last().expect("non-empty");
    let degenerate = lambda_min <= k.rows() as f64 * f64::EPSILON * lambda_max.abs();
    let kappa = if degenerate { f64::INFINITY } else { lambda_max / lambda_min };
    Ok(Spectrum { eigenvalues, lambda_min, lambda_max, kappa, degenerate })
}

fn require_unit_second_moment(d: &DualActivation) -> Result<()> {
    if !has_unit_second_moment(d) {
        return Err(domain(format!(
            "'{}' has E[σ²] = {:.6}, so the diagonal would leave 1; use the general-norm recursion",
            d.name(),
            d.second_moment()
        )));
    }
    Ok(())
}

fn one_layer(k: &mut Matrix, d: &DualActivation) -> Result<()> {
    let n = k.rows();
    for i in 0..n {
        for j in 0..i {
            let v = gram::clamp_correlation(d.eval_unchecked(k[(i, j)]))?;
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    Ok(())
}

/// Applies `σ̂` entrywise `depth` times. The diagonal stays exactly one.
pub fn propagate_kernel(k: &GramMatrix, d: &DualActivation, depth: usize) -> Result<GramMatrix> {
    k.require_unit_diagonal("kernel propagation")?;
    if depth > 0 {
        require_unit_second_moment(d)?;
    }
    let mut m = k.entries().clone();
    for _ in 0..depth {
        one_layer(&mut m, d)?;
    }
    Ok(GramMatrix::from_unit_parts(m))
}

/// One entry of the limiting tangent kernel at correlation `rho`.
///
/// With `s_h = σ̂^{(h)}(ρ)` this is `Θ_L` for `Θ_0 = s_0` and
/// `Θ_h = s_h + σ̂'(s_{h−1}) Θ_{h−1}`.
///
/// For a unit second moment, `ρ = 1` is held exactly: when `σ̂'(1) > 1` that
/// fixed point is repelling and a one-ulp error in `σ̂(1)` would grow.
pub fn ntk_value(d: &DualActivation, rho: f64, depth: usize) -> f64 {
    let pinned = has_unit_second_moment(d);
    let mut s = rho.clamp(-1.0, 1.0);
    let mut theta = s;
    for _ in 0..depth {
        (s, theta) = ntk_step(d, pinned, s, theta);
    }
    theta
}

fn has_unit_second_moment(d: &DualActivation) -> bool {
    (d.second_moment() - 1.0).abs() <= 1e-6
}

/// `(s_{h−1}, Θ_{h−1}) ↦ (s_h, Θ_h)`.
fn ntk_step(d: &DualActivation, pinned: bool, s: f64, theta: f64) -> (f64, f64) {
    let ds = d.derivative_unchecked(s);
    let next = if pinned && s == 1.0 { 1.0 } else { d.eval_unchecked(s).clamp(-1.0, 1.0) };
    (next, next + ds * theta)
}

/// `(σ̂'(1)^{L+1} − 1)/(σ̂'(1) − 1)`, or `L + 1` when `σ̂'(1) = 1`.
pub fn ntk_diagonal(d: &DualActivation, depth: usize) -> f64 {
    let q = d.derivative_at_one();
    if (q - 1.0).abs() < 1e-12 {
        (depth + 1) as f64
    } else {
        (q.powi(depth as i32 + 1) - 1.0) / (q - 1.0)
    }
}

fn require_finite_slope(d: &DualActivation) -> Result<()> {
    if !d.derivative_at_one().is_finite() {
        return Err(domain(format!(
            "'{}' has an unbounded dual derivative at 1, so its tangent kernel is infinite",
            d.name()
        )));
    }
    Ok(())
}

/// The limiting tangent-kernel matrix at depth `depth`.
pub fn ntk_matrix(k: &GramMatrix, d: &DualActivation, depth: usize) -> Result<Matrix> {
    k.require_unit_diagonal("tangent kernel")?;
    if depth > 0 {
        require_unit_second_moment(d)?;
        require_finite_slope(d)?;
    }
    let n = k.n();
    let mut out = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let v = ntk_value(d, k.get(i, j), depth);
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    Ok(out)
}

/// A function `f` with a non-negative power series, applied entrywise.
pub trait KernelFunction: Sync {
    fn value(&self, rho: f64) -> f64;
}

impl KernelFunction for DualActivation {
    fn value(&self, rho: f64) -> f64 {
        self.eval_unchecked(rho.clamp(-1.0, 1.0))
    }
}

/// `σ̂^{(L)}`.
pub struct ComposedDual<'a> {
    pub dual: &'a DualActivation,
    pub depth: usize,
}

impl KernelFunction for ComposedDual<'_> {
    fn value(&self, rho: f64) -> f64 {
        let mut r = rho.clamp(-1.0, 1.0);
        for _ in 0..self.depth {
            r = self.dual.eval_unchecked(r).clamp(-1.0, 1.0);
        }
        r
    }
}

/// The tangent kernel as a function of the input correlation.
pub struct NtkFunction<'a> {
    pub dual: &'a DualActivation,
    pub depth: usize,
}

impl KernelFunction for NtkFunction<'_> {
    fn value(&self, rho: f64) -> f64 {
        ntk_value(self.dual, rho, self.depth)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EigenLowerBound {
    /// `λ_min(f[K])`.
    pub lhs_min: f64,
    /// `f(1) − f(1 − δ)`.
    pub rhs_bound: f64,
    pub holds: bool,
}

/// Compares `λ_min(f[K])` with `f(1) − f(1 − δ)` for `K ⪰ δI`.
pub fn eigen_lb_check(f: &dyn KernelFunction, k: &GramMatrix, delta: f64) -> Result<EigenLowerBound> {
    k.require_unit_diagonal("the eigenvalue lower bound")?;
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(domain(format!("δ = {delta} outside (0, 1]")));
    }
    let lmin = spectrum(k.entries())?.lambda_min;
    if lmin < delta - 1e-12 {
        return Err(domain(format!("λ_min(K) = {lmin} is below δ = {delta}")));
    }
    let n = k.n();
    let fk = Matrix::from_fn(n, n, |i, j| f.value(k.get(i, j)));
    let lhs_min = spectrum(&fk)?.lambda_min;
    let rhs_bound = f.value(1.0) - f.value(1.0 - delta);
    Ok(EigenLowerBound { lhs_min, rhs_bound, holds: lhs_min >= rhs_bound - BOUND_SLACK })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ProfileKind {
    TopLayer,
    Ntk,
}

/// Measured and predicted quantities at one depth. For tangent kernels the
/// measured quantities are divided by the common diagonal value.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DepthRecord {
    pub depth: usize,
    pub max_off_diag: f64,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub kappa: f64,
    /// Off-diagonal envelope under the separation assumption; NaN where none applies.
    pub bound_b: f64,
    /// Tightest applicable condition-number bound; NaN where none applies.
    pub bound_kappa: f64,
    /// Unnormalized diagonal value.
    pub diagonal: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Violation {
    pub depth: usize,
    pub check: String,
    pub measured: f64,
    pub bound: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct DepthProfile {
    pub kind: ProfileKind,
    pub activation: String,
    pub n: usize,
    pub mu: f64,
    /// The activation is affine, so no bound is checked.
    pub linear: bool,
    /// `1 − max_{i≠j} |K_ij|`.
    pub delta_separation: f64,
    /// `λ_min(K)` when positive.
    pub delta_nonsingular: Option<f64>,
    pub separation: Option<BoundParams>,
    pub nonsingular: Option<BoundParams>,
    pub records: Vec<DepthRecord>,
    pub violations: Vec<Violation>,
}

impl DepthProfile {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    pub const CSV_HEADER: &'static str = "L,maxOffDiag,lambdaMin,lambdaMax,kappa,boundB,boundKappa";

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for r in &self.records {
            out.push_str(&format!(
                "{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}\n",
                r.depth, r.max_off_diag, r.lambda_min, r.lambda_max, r.kappa, r.bound_b, r.bound_kappa
            ));
        }
        out
    }
}

struct Checker {
    violations: Vec<Violation>,
}

impl Checker {
    fn upper(&mut self, depth: usize, check: &str, measured: f64, bound: f64) {
        if !(measured <= bound + BOUND_SLACK * bound.abs().max(1.0)) {
            self.violations.push(Violation { depth, check: check.into(), measured, bound });
        }
    }

    /// Strict tolerance check with no added slack.
    fn within(&mut self, depth: usize, check: &str, measured: f64, tol: f64) {
        if !(measured <= tol) {
            self.violations.push(Violation { depth, check: check.into(), measured, bound: tol });
        }
    }

    fn lower(&mut self, depth: usize, check: &str, measured: f64, bound: f64) {
        if !(measured >= bound - BOUND_SLACK * bound.abs().max(1.0)) {
            self.violations.push(Violation { depth, check: check.into(), measured, bound });
        }
    }
}

struct Assumptions {
    delta_sep: f64,
    delta_ns: Option<f64>,
    sep: Option<BoundParams>,
    ns: Option<BoundParams>,
}

fn assumptions(k: &GramMatrix, d: &DualActivation) -> Result<Assumptions> {
    let n = k.n();
    let delta_sep = match k.max_off_diagonal_pair() {
        Some((v, i, j)) if v >= 1.0 => {
            return Err(Error::Precondition(format!(
                "inputs {i} and {j} coincide up to sign (|K_ij| = {v}), so no depth separates them"
            )))
        }
        Some((v, _, _)) => 1.0 - v,
        None => 1.0,
    };
    let lmin = spectrum(k.entries())?.lambda_min;
    let delta_ns = (lmin > 0.0).then(|| lmin.min(1.0));
    let (sep, ns) = if d.is_affine() {
        (None, None)
    } else {
        let mu = d.mu();
        (
            Some(depth_thresholds(mu, delta_sep, n)?),
            delta_ns.map(|dn| depth_thresholds(mu, dn, n)).transpose()?,
        )
    };
    Ok(Assumptions { delta_sep, delta_ns, sep, ns })
}

fn gershgorin(c: &mut Checker, depth: usize, n: usize, off: f64, lmin: f64, lmax: f64) {
    let spread = (n.saturating_sub(1)) as f64 * off;
    c.upper(depth, "gershgorin-max", lmax, 1.0 + spread);
    c.lower(depth, "gershgorin-min", lmin, 1.0 - spread);
}

fn min_opt(vals: &[Option<f64>]) -> f64 {
    vals.iter().flatten().copied().fold(f64::NAN, f64::min)
}

/// Depth profile of the limiting top-layer kernel for depths `0..=lmax`.
/// Bound violations are recorded rather than raised.
pub fn verify_top_layer(k: &GramMatrix, d: &DualActivation, lmax: usize) -> Result<DepthProfile> {
    k.require_unit_diagonal("the top-layer profile")?;
    if lmax > 0 {
        require_unit_second_moment(d)?;
    }
    let a = assumptions(k, d)?;
    let n = k.n();
    let mut mats = Vec::with_capacity(lmax + 1);
    let mut m = k.entries().clone();
    mats.push(m.clone());
    for _ in 0..lmax {
        one_layer(&mut m, d)?;
        mats.push(m.clone());
    }
    let spectra: Vec<Spectrum> = mats.par_iter().map(spectrum).collect::<Result<_>>()?;

    let mut c = Checker { violations: Vec::new() };
    let mut records = Vec::with_capacity(lmax + 1);
    for (depth, (mat, sp)) in mats.iter().zip(&spectra).enumerate() {
        let off = GramMatrix::from_unit_parts(mat.clone()).max_off_diagonal();
        let l = depth as u64;
        let mut bound_b = f64::NAN;
        let mut kappas = Vec::new();
        if let Some(p) = &a.sep {
            bound_b = p.b(depth as f64);
            c.upper(depth, "offdiag<=B", off, bound_b);
            if let Some(kb) = p.kappa_separation(l) {
                c.upper(depth, "kappa-separation", sp.kappa, kb);
                kappas.push(Some(kb));
            }
        }
        if let Some(p) = &a.ns {
            c.lower(depth, "lambdamin>=1-B", sp.lambda_min, 1.0 - p.b(depth as f64));
            let kb = p.kappa_nonsingular(l);
            c.upper(depth, "kappa-nonsingular", sp.kappa, kb);
            kappas.push(Some(kb));
        }
        gershgorin(&mut c, depth, n, off, sp.lambda_min, sp.lambda_max);
        records.push(DepthRecord {
            depth,
            max_off_diag: off,
            lambda_min: sp.lambda_min,
            lambda_max: sp.lambda_max,
            kappa: sp.kappa,
            bound_b,
            bound_kappa: min_opt(&kappas),
            diagonal: 1.0,
        });
    }
    Ok(DepthProfile {
        kind: ProfileKind::TopLayer,
        activation: d.name().to_string(),
        n,
        mu: d.mu(),
        linear: d.is_affine(),
        delta_separation: a.delta_sep,
        delta_nonsingular: a.delta_ns,
        separation: a.sep,
        nonsingular: a.ns,
        records,
        violations: c.violations,
    })
}

/// Depth profile of the limiting tangent kernel for depths `0..=lmax`.
pub fn verify_ntk(k: &GramMatrix, d: &DualActivation, lmax: usize) -> Result<DepthProfile> {
    k.require_unit_diagonal("the tangent-kernel profile")?;
    if lmax > 0 {
        require_unit_second_moment(d)?;
        require_finite_slope(d)?;
    }
    let a = assumptions(k, d)?;
    let n = k.n();

    // Θ_h = s_h + σ̂'(s_{h−1}) Θ_{h−1}, advanced one depth at a time.
    let pinned = has_unit_second_moment(d);
    let mut s = k.entries().clone();
    let mut theta = s.clone();
    let mut mats = Vec::with_capacity(lmax + 1);
    mats.push(theta.clone());
    for _ in 0..lmax {
        for i in 0..n {
            for j in 0..=i {
                gram::clamp_correlation(d.eval_unchecked(s[(i, j)]))?;
                let (next, t) = ntk_step(d, pinned, s[(i, j)], theta[(i, j)]);
                s[(i, j)] = next;
                s[(j, i)] = next;
                theta[(i, j)] = t;
                theta[(j, i)] = t;
            }
        }
        mats.push(theta.clone());
    }
    let spectra: Vec<Spectrum> = mats.par_iter().map(spectrum).collect::<Result<_>>()?;

    let mut c = Checker { violations: Vec::new() };
    let mut records = Vec::with_capacity(lmax + 1);
    for (depth, (mat, sp)) in mats.iter().zip(&spectra).enumerate() {
        let diag = mat[(0, 0)];
        let spread = (0..n).map(|i| (mat[(i, i)] - diag).abs()).fold(0.0, f64::max);
        c.within(depth, "diagonal-equal", spread, 1e-10 * diag.abs().max(1.0));
        let expected = ntk_diagonal(d, depth);
        c.within(depth, "diagonal-closed-form", (diag - expected).abs(), 1e-10 * expected.abs().max(1.0));

        let mut off = 0.0f64;
        for i in 0..n {
            for j in 0..i {
                off = off.max(mat[(i, j)].abs());
            }
        }
        let (off, lmin, lmax_, kappa) = (off / diag, sp.lambda_min / diag, sp.lambda_max / diag, sp.kappa);
        let l = depth as u64;
        let mut bound_b = f64::NAN;
        let mut kappas = Vec::new();
        if let Some(p) = &a.sep {
            if let Some(r) = p.ntk_ratio(l) {
                bound_b = r;
                c.upper(depth, "ntk-offdiag<=2B(L/2)", off, r);
            }
            if let Some(kb) = p.ntk_kappa_separation(l) {
                c.upper(depth, "ntk-kappa-separation", kappa, kb);
                kappas.push(Some(kb));
            }
        }
        if let Some(p) = &a.ns {
            if let Some(r) = p.ntk_ratio(l) {
                c.lower(depth, "ntk-lambdamin>=1-2B(L/2)", lmin, 1.0 - r);
            }
            if let Some(kb) = p.ntk_kappa_nonsingular(l) {
                c.upper(depth, "ntk-kappa-nonsingular", kappa, kb);
                kappas.push(Some(kb));
            }
        }
        gershgorin(&mut c, depth, n, off, lmin, lmax_);
        records.push(DepthRecord {
            depth,
            max_off_diag: off,
            lambda_min: lmin,
            lambda_max: lmax_,
            kappa,
            bound_b,
            bound_kappa: min_opt(&kappas),
            diagonal: diag,
        });
    }
    Ok(DepthProfile {
        kind: ProfileKind::Ntk,
        activation: d.name().to_string(),
        n,
        mu: d.mu(),
        linear: d.is_affine(),
        delta_separation: a.delta_sep,
        delta_nonsingular: a.delta_ns,
        separation: a.sep,
        nonsingular: a.ns,
        records,
        violations: c.violations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_by_two(rho: f64) -> GramMatrix {
        GramMatrix::new(Matrix::from_rows(&[vec![1.0, rho], vec![rho, 1.0]]).unwrap()).unwrap()
    }

    fn dual(name: &str) -> DualActivation {
        DualActivation::builtin(name).unwrap()
    }

    #[test]
    fn propagation_examples() {
        let k = two_by_two(0.9);
        assert_eq!(propagate_kernel(&k, &dual("hermite2"), 0).unwrap(), k);
        assert_eq!(propagate_kernel(&k, &dual("identity"), 7).unwrap(), k);
        let h = propagate_kernel(&k, &dual("hermite2"), 3).unwrap();
        assert!((h.get(0, 1) - 0.430_467_21).abs() < 1e-14);
        assert!(propagate_kernel(&k, &dual("relu"), 1).is_err());
    }

    #[test]
    fn ntk_examples() {
        let k = two_by_two(0.4);
        let h = ntk_matrix(&k, &dual("hermite2"), 2).unwrap();
        assert!((h[(0, 0)] - 7.0).abs() < 1e-12);
        let id = ntk_matrix(&k, &dual("identity"), 5).unwrap();
        assert!((id[(0, 1)] - 6.0 * 0.4).abs() < 1e-14);
        assert!((id[(0, 0)] - 6.0).abs() < 1e-14);
        let z = ntk_matrix(&k, &dual("relu-normalized"), 0).unwrap();
        assert_eq!(z, k.entries().clone());
        assert!(ntk_matrix(&k, &dual("step-sqnorm"), 1).is_err());
    }

    #[test]
    fn ntk_matches_explicit_sum() {
        // Σ_{h=1}^{L+1} σ̂^{(h−1)}(ρ) Π_{h'=h}^{L} σ̂'(σ̂^{(h'−1)}(ρ))
        let d = dual("relu-normalized");
        let (rho, depth) = (0.3, 4);
        let s: Vec<f64> = (0..=depth).map(|h| d.iterate(rho, h).unwrap()).collect();
        let mut total = 0.0;
        for h in 1..=depth + 1 {
            let mut prod = 1.0;
            for hp in h..=depth {
                prod *= d.derivative(s[hp - 1]).unwrap();
            }
            total += s[h - 1] * prod;
        }
        assert!((ntk_value(&d, rho, depth) - total).abs() < 1e-13);
    }

    #[test]
    fn spectrum_examples() {
        let s = spectrum(&Matrix::identity(4)).unwrap();
        assert_eq!((s.lambda_min, s.lambda_max, s.kappa), (1.0, 1.0, 1.0));
        let s = spectrum(two_by_two(0.35).entries()).unwrap();
        assert!((s.lambda_min - 0.65).abs() < 1e-15 && (s.lambda_max - 1.35).abs() < 1e-15);
        let s = spectrum(two_by_two(1.0).entries()).unwrap();
        assert!(s.degenerate && s.kappa.is_infinite());
    }

    #[test]
    fn profile_examples() {
        let p = verify_top_layer(&two_by_two(0.5), &dual("relu-normalized"), 30).unwrap();
        assert!(p.passed(), "{:?}", p.violations);
        let single = GramMatrix::new(Matrix::identity(1)).unwrap();
        let p = verify_top_layer(&single, &dual("relu-normalized"), 5).unwrap();
        assert!(p.records.iter().all(|r| r.kappa == 1.0));
        let p = verify_top_layer(&two_by_two(0.5), &dual("identity"), 10).unwrap();
        assert!(p.linear && p.separation.is_none());
        assert!(p.records.iter().all(|r| r.max_off_diag == 0.5));
        assert!(matches!(
            verify_top_layer(&two_by_two(1.0), &dual("relu-normalized"), 3),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn ntk_profile_examples() {
        let d = dual("relu-normalized");
        let k = two_by_two(0.3);
        let l0 = l0(d.mu(), 0.7).unwrap() as usize;
        let p = verify_ntk(&k, &d, (4 * l0).max(8)).unwrap();
        assert!(p.passed(), "{:?}", p.violations);
        let p = verify_ntk(&k, &dual("identity"), 6).unwrap();
        assert!(p.records.iter().all(|r| (r.max_off_diag - 0.3).abs() < 1e-15));
    }

    #[test]
    fn eigen_lb_examples() {
        let d = dual("relu-normalized");
        let r = eigen_lb_check(&d, &GramMatrix::new(Matrix::identity(3)).unwrap(), 1.0).unwrap();
        assert!(r.holds);
        assert!((r.rhs_bound - (d.value(1.0) - d.value(0.0))).abs() < 1e-15);
        let id = dual("identity");
        let k = two_by_two(0.6);
        let r = eigen_lb_check(&id, &k, 0.4).unwrap();
        assert!((r.rhs_bound - 0.4).abs() < 1e-15 && r.holds);
        assert!(eigen_lb_check(&id, &k, 0.5).is_err());
    }
}
