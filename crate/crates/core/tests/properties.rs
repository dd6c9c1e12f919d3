//! Falsification tests: each property would break under a specific class of
//! bug, noted on the test.

use depthcond::conditioning::{bound_b, ntk_diagonal, ntk_value, propagate_kernel, spectrum, GramMatrix};
use depthcond::dual::NORMALIZED_NONLINEAR;
use depthcond::linalg::Matrix;
use depthcond::montecarlo::{feature_map, project_unit, sample_network_trial, UNIT_TOLERANCE};
use depthcond::training::{gd_top_layer, min_norm_interpolator};
use depthcond::{ActivationSpec, DualActivation, NetworkConfig, RegressionProblem};
use proptest::prelude::*;
use std::sync::OnceLock;

fn duals() -> &'static [DualActivation] {
    static D: OnceLock<Vec<DualActivation>> = OnceLock::new();
    D.get_or_init(|| NORMALIZED_NONLINEAR.iter().map(|n| DualActivation::builtin(n).unwrap()).collect())
}

fn unit_vectors(n: usize, dim: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    proptest::collection::vec(proptest::collection::vec(-1.0f64..1.0, dim), n).prop_filter_map(
        "zero vector",
        |vs| {
            vs.into_iter()
                .map(|v| {
                    let r = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                    (r > 1e-3).then(|| v.iter().map(|x| x / r).collect())
                })
                .collect()
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// A normalized dual maps [−1, 1] into itself and is non-decreasing on
    /// [0, 1]. A negative squared coefficient or a mis-scaled tail breaks it.
    #[test]
    fn dual_is_a_contraction_of_the_interval(idx in 0usize..6, a in -1.0f64..=1.0, b in 0.0f64..=1.0) {
        let d = &duals()[idx];
        let v = d.eval(a).unwrap();
        prop_assert!(v.abs() <= 1.0 + 1e-12, "{}: σ̂({a}) = {v}", d.name());
        prop_assert!(v.abs() <= d.eval(a.abs()).unwrap() + 1e-12);
        let (lo, hi) = if b < a.abs() { (b, a.abs()) } else { (a.abs(), b) };
        prop_assert!(d.eval(lo).unwrap() <= d.eval(hi).unwrap() + 1e-12);
    }

    /// Tangent-kernel entries never exceed the diagonal. An off-by-one in the
    /// recursion index makes off-diagonal entries overtake it.
    #[test]
    fn ntk_entries_are_dominated_by_the_diagonal(idx in 0usize..6, rho in -1.0f64..1.0, depth in 0usize..30) {
        let d = &duals()[idx];
        let v = ntk_value(d, rho, depth);
        let diag = ntk_diagonal(d, depth);
        prop_assert!(v.abs() <= diag * (1.0 + 1e-12), "{}: |Θ({rho})| = {v} > {diag}", d.name());
    }

    /// Propagating a Gram matrix keeps it PSD with unit diagonal.
    #[test]
    fn propagation_preserves_psd(xs in unit_vectors(6, 4), idx in 0usize..6, depth in 1usize..20) {
        let k = GramMatrix::from_vectors(&xs).unwrap();
        let out = propagate_kernel(&k, &duals()[idx], depth).unwrap();
        prop_assert!(out.is_unit_diagonal());
        let s = spectrum(out.entries()).unwrap();
        prop_assert!(s.lambda_min >= -1e-10, "λ_min = {}", s.lambda_min);
    }

    /// The envelope is within (0, 1) and non-increasing in depth. A sign
    /// slip in either branch or a wrong hand-off depth breaks monotonicity.
    #[test]
    fn envelope_is_monotone(mu in 0.01f64..=1.0, delta in 0.001f64..=1.0, l in 0.0f64..200.0) {
        let a = bound_b(mu, l, delta).unwrap();
        let b = bound_b(mu, l + 0.5, delta).unwrap();
        prop_assert!((0.0..1.0).contains(&a));
        prop_assert!(b <= a + 1e-15, "B({l}) = {a} < B({}) = {b}", l + 0.5);
    }

    /// Π is exactly idempotent and lands on the unit sphere.
    #[test]
    fn projection_is_idempotent(v in proptest::collection::vec(-1e3f64..1e3, 1..40)) {
        prop_assume!(v.iter().any(|x| x.abs() > 1e-6));
        let p = project_unit(&v).unwrap();
        prop_assert_eq!(project_unit(&p).unwrap(), p.clone());
        let r: f64 = p.iter().map(|x| x * x).sum();
        prop_assert!((r.sqrt() - 1.0).abs() <= UNIT_TOLERANCE);
    }

    /// With a step at most `2/(λ_min + λ_max)` of the Hessian, gradient
    /// descent never increases the loss.
    #[test]
    fn gradient_descent_is_monotone(
        rows in proptest::collection::vec(proptest::collection::vec(-1.0f64..1.0, 5), 2..5),
        labels in proptest::collection::vec(-1.0f64..=1.0, 5),
        scale in 0.1f64..=1.0,
    ) {
        let n = rows.len();
        let p = RegressionProblem::new(Matrix::from_rows(&rows).unwrap(), labels[..n].to_vec()).unwrap();
        prop_assume!(p.gram_extremes().is_ok());
        let run = gd_top_layer(&p, scale * p.optimal_step_size().unwrap(), 50).unwrap();
        for w in run.loss.windows(2) {
            prop_assert!(w[1] <= w[0] * (1.0 + 1e-12) + 1e-15);
        }
        prop_assert!(run.within_rate_bound());
    }

    /// The interpolator reproduces the labels on a well-conditioned kernel.
    #[test]
    fn interpolation_is_exact(xs in unit_vectors(8, 10), labels in proptest::collection::vec(-1.0f64..=1.0, 8)) {
        let k = GramMatrix::from_vectors(&xs).unwrap();
        let kbar = propagate_kernel(&k, &duals()[0], 10).unwrap();
        prop_assume!(spectrum(kbar.entries()).unwrap().kappa < 1e6);
        let r = min_norm_interpolator(&kbar, &labels).unwrap();
        prop_assert!(r.max_residual <= 1e-8);
    }

    /// CSV output parses back to the identical matrix.
    #[test]
    fn gram_csv_roundtrip(xs in unit_vectors(5, 3)) {
        let k = GramMatrix::from_vectors(&xs).unwrap();
        let back = GramMatrix::from_csv_str(&k.to_csv_string()).unwrap();
        prop_assert_eq!(back.entries(), k.entries());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    /// A network is a pure function of (seed, trial); features through the
    /// final Π are unit vectors.
    #[test]
    fn networks_are_reproducible(seed in any::<u64>(), trial in 0u64..4, x in unit_vectors(1, 5)) {
        let spec = ActivationSpec::builtin("tanh-normalized").unwrap();
        let cfg = NetworkConfig::new(5, 16, 3, spec, seed).with_layer_normalization(true);
        let a = sample_network_trial(&cfg, trial).unwrap();
        let b = sample_network_trial(&cfg, trial).unwrap();
        prop_assert_eq!(a.output(&x[0]).unwrap(), b.output(&x[0]).unwrap());
        let f = feature_map(&a, &x[0]).unwrap();
        let r: f64 = f.iter().map(|v| v * v).sum();
        prop_assert!((r - 1.0).abs() < 1e-12);
    }
}
