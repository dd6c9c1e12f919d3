//! Runs every acceptance criterion and prints one PASS/FAIL line for each.
//! Built with `harness = false`, so output is never captured.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use depthcond::conditioning::bounds::{bound_b, depth_thresholds};
use depthcond::conditioning::{
    eigen_lb_check, ntk_diagonal, ntk_matrix, synthetic_inputs, uncentered_convergence, verify_ntk, verify_top_layer,
    DepthProfile, GramMatrix, KernelFunction, NtkFunction,
};
use depthcond::dual::{ActivationSpec, NormRelu, BUILTIN_NAMES, NORMALIZED_NONLINEAR};
use depthcond::hermite::{bivariate_expectation, hermite_value};
use depthcond::linalg::{sym_eigenvalues, Matrix};
use depthcond::montecarlo::{
    bn_invariance_check, correlation_decay_experiment, kernel_concentration, sample_network, feature_map, KernelKind,
    NetworkConfig, TrialSummary,
};
use depthcond::rng;
use depthcond::training::{
    excess_risk_estimate, gd_top_layer, min_norm_interpolator, sgd_top_layer, DataGenerator, RegressionProblem,
};
use depthcond::DualActivation;
use rand::Rng;
use std::f64::consts::{E, PI};
use std::process::ExitCode;
use std::time::{Duration, Instant};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

const DELTAS: [f64; 3] = [0.05, 0.2, 0.5];
const LMAX: usize = 100;
const N_SYNTH: usize = 8;

fn c1_mu_table() -> Outcome {
    let expected = [
        ("relu", (PI - 2.0) / (2.0 * PI - 2.0)),
        ("step", (PI - 2.0) / PI),
        ("exp", (E - 2.0) / (E - 1.0)),
        ("identity", 0.0),
        ("hermite2", 1.0),
    ];
    let mut worst: f64 = 0.0;
    for (name, mu) in expected {
        let d = DualActivation::builtin(name).unwrap();
        worst = worst.max((d.mu() - mu).abs());
    }
    outcome(worst <= 1e-6, format!("max |μ − table| = {worst:.2e} (tol 1e-6)"))
}

fn c2_normrelu() -> Outcome {
    let r = NormRelu::new(-1.5975).unwrap();
    let k = r.constants;
    let checks = [
        ("λ", k.lambda, 1.05, 5e-3),
        ("μ", k.mu, 0.0156, 1e-3),
        ("α⁻", r.alpha_minus(), 0.0798, 2e-3),
        ("α⁺", r.alpha_plus(), 0.1572, 2e-3),
        ("bias(0.5)", r.bias(0.5).unwrap(), 0.00086, 2e-4),
        ("bias(2)", r.bias(2.0).unwrap(), 0.0029, 5e-4),
    ];
    let failed: Vec<String> = checks
        .iter()
        .filter(|(_, v, t, tol)| !((v - t).abs() <= *tol))
        .map(|(n, v, t, _)| format!("{n}={v:.5} vs {t}"))
        .collect();
    let summary = checks.iter().map(|(n, v, _, _)| format!("{n}={v:.5}")).collect::<Vec<_>>().join(" ");
    outcome(failed.is_empty(), if failed.is_empty() { summary } else { failed.join("; ") })
}

/// Profiles for every normalized non-linear activation and every δ.
fn profiles(ntk: bool) -> Vec<(String, f64, DepthProfile)> {
    let mut out = Vec::new();
    for name in NORMALIZED_NONLINEAR {
        let d = DualActivation::builtin(name).unwrap();
        for (s, &delta) in DELTAS.iter().enumerate() {
            let k = synthetic_inputs(N_SYNTH, delta, 100 + s as u64).unwrap().gram;
            let p = if ntk { verify_ntk(&k, &d, LMAX) } else { verify_top_layer(&k, &d, LMAX) }.unwrap();
            out.push((name.to_string(), delta, p));
        }
    }
    out
}

fn c3_decay(ps: &[(String, f64, DepthProfile)]) -> Outcome {
    let mut checked = 0;
    let mut bad = Vec::new();
    for (name, delta, p) in ps {
        for r in &p.records {
            let b = bound_b(p.mu, r.depth as f64, *delta).unwrap();
            checked += 2;
            if !(r.max_off_diag <= b + 1e-9) {
                bad.push(format!("{name} δ={delta} L={} offdiag {:.3e} > {b:.3e}", r.depth, r.max_off_diag));
            }
            if !(r.lambda_min >= 1.0 - b - 1e-9) {
                bad.push(format!("{name} δ={delta} L={} λmin {:.3e} < {:.3e}", r.depth, r.lambda_min, 1.0 - b));
            }
        }
    }
    outcome(bad.is_empty(), if bad.is_empty() { format!("{checked} checks") } else { bad[..bad.len().min(3)].join("; ") })
}

fn c4_kappa(ps: &[(String, f64, DepthProfile)]) -> Outcome {
    let mut checked = 0;
    let mut bad = Vec::new();
    for (name, delta, p) in ps {
        let bp = depth_thresholds(p.mu, *delta, N_SYNTH).unwrap();
        for r in &p.records {
            let l = r.depth as u64;
            if let Some(b) = bp.kappa_separation(l) {
                checked += 1;
                if !(r.kappa <= b + 1e-9 * b) {
                    bad.push(format!("{name} δ={delta} L={l} κ {:.6} > sep {b:.6}", r.kappa));
                }
            }
            let b = bp.kappa_nonsingular(l);
            checked += 1;
            if !(r.kappa <= b + 1e-9 * b) {
                bad.push(format!("{name} δ={delta} L={l} κ {:.6} > ns {b:.6}", r.kappa));
            }
        }
    }
    outcome(bad.is_empty(), if bad.is_empty() { format!("{checked} checks") } else { bad[..bad.len().min(3)].join("; ") })
}

fn c5_ntk(ps: &[(String, f64, DepthProfile)]) -> Outcome {
    let mut checked = 0;
    let mut bad = Vec::new();
    for (name, delta, p) in ps {
        let d = DualActivation::builtin(name).unwrap();
        let k = synthetic_inputs(N_SYNTH, *delta, 0).unwrap().gram;
        for depth in [1, 2, 5, 20, LMAX] {
            let m = ntk_matrix(&k, &d, depth).unwrap();
            let expect = ntk_diagonal(&d, depth);
            for i in 0..N_SYNTH {
                checked += 1;
                if !((m[(i, i)] - expect).abs() <= 1e-10 * expect.max(1.0)) {
                    bad.push(format!("{name} L={depth} diagonal {:.12e} vs {expect:.12e}", m[(i, i)]));
                }
            }
        }
        for v in &p.violations {
            bad.push(format!("{name} δ={delta}: {} at L={} ({:.3e} vs {:.3e})", v.check, v.depth, v.measured, v.bound));
        }
        let bp = depth_thresholds(p.mu, *delta, N_SYNTH).unwrap();
        for r in &p.records {
            let l = r.depth as u64;
            if let Some(b) = bp.ntk_ratio(l) {
                checked += 1;
                if !(r.max_off_diag <= b + 1e-9) {
                    bad.push(format!("{name} δ={delta} L={l} ratio {:.3e} > {b:.3e}", r.max_off_diag));
                }
            }
            for b in [bp.ntk_kappa_separation(l), bp.ntk_kappa_nonsingular(l)].into_iter().flatten() {
                checked += 1;
                if !(r.kappa <= b + 1e-9 * b) {
                    bad.push(format!("{name} δ={delta} L={l} κ {:.6} > {b:.6}", r.kappa));
                }
            }
        }
    }
    outcome(bad.is_empty(), if bad.is_empty() { format!("{checked} checks") } else { bad[..bad.len().min(3)].join("; ") })
}

fn random_unit_gram(r: &mut rand_chacha::ChaCha8Rng, n: usize) -> GramMatrix {
    let dim = n + r.gen_range(0..4);
    let xs: Vec<Vec<f64>> = (0..n).map(|_| rng::unit_vector(r, dim)).collect();
    GramMatrix::from_vectors(&xs).unwrap()
}

fn c6_eigen_lb() -> Outcome {
    let duals: Vec<DualActivation> = BUILTIN_NAMES.iter().map(|n| DualActivation::builtin(n).unwrap()).collect();
    let normalized: Vec<DualActivation> =
        NORMALIZED_NONLINEAR.iter().map(|n| DualActivation::builtin(n).unwrap()).collect();
    let mut r = rng::stream(6, &[], 0);
    let mut checked = 0;
    let mut worst = f64::INFINITY;
    let mut bad = Vec::new();
    for trial in 0..500 {
        let n = r.gen_range(2..=8);
        let k = random_unit_gram(&mut r, n);
        let delta = sym_eigenvalues(k.entries()).unwrap()[0];
        if delta <= 0.0 {
            continue;
        }
        let mut fs: Vec<Box<dyn KernelFunction + '_>> = Vec::new();
        for d in &duals {
            fs.push(Box::new(d.clone()));
        }
        for d in &normalized {
            for depth in 1..=3 {
                fs.push(Box::new(NtkFunction { dual: d, depth }));
            }
        }
        for f in &fs {
            let res = eigen_lb_check(f.as_ref(), &k, delta).unwrap();
            checked += 1;
            worst = worst.min(res.lhs_min - res.rhs_bound);
            if !res.holds {
                bad.push(format!("trial {trial}: {:.3e} < {:.3e}", res.lhs_min, res.rhs_bound));
            }
        }
    }
    outcome(
        bad.is_empty(),
        if bad.is_empty() { format!("{checked} checks, min slack {worst:.3e}") } else { bad[..bad.len().min(3)].join("; ") },
    )
}

fn c7_orthogonality() -> Outcome {
    let mut r = rng::stream(7, &[], 0);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let g1 = r.gen_range(0.25..4.0);
        let g2 = r.gen_range(0.25..4.0);
        let g3 = r.gen_range(-0.95..0.95) * f64::sqrt(g1 * g2);
        let ratio = g3 / (g1 * g2).sqrt();
        for i in 0..=8 {
            for j in 0..=8 {
                let v = bivariate_expectation(
                    |x| hermite_value(i, x, g1).unwrap(),
                    &[],
                    |y| hermite_value(j, y, g2).unwrap(),
                    &[],
                    [g1, g3, g2],
                )
                .unwrap();
                let expect = if i == j { ratio.powi(j as i32) } else { 0.0 };
                worst = worst.max((v - expect).abs());
            }
        }
    }
    outcome(worst <= 1e-6, format!("max deviation {worst:.2e} (tol 1e-6)"))
}

fn unit_inputs(n: usize, dim: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut r = rng::stream(seed, &[rng::domain::INPUTS], 0);
    (0..n).map(|_| rng::unit_vector(&mut r, dim)).collect()
}

fn c8_concentration() -> Outcome {
    let relu = ActivationSpec::builtin("relu-normalized").unwrap();
    let xs = unit_inputs(4, 6, 8);
    let mut lines = Vec::new();
    let mut pass = true;
    let mut prev = f64::INFINITY;
    let mut last_z = 0.0;
    for m in [256, 1024, 4096] {
        let cfg = NetworkConfig::new(6, m, 3, relu.clone(), 80);
        let rep = kernel_concentration(&cfg, &xs, 50, KernelKind::Features).unwrap();
        pass &= rep.mean_abs_error.mean < prev;
        prev = rep.mean_abs_error.mean;
        last_z = rep.max_z;
        lines.push(format!("K m={m}: err {:.2e}", rep.mean_abs_error.mean));
    }
    pass &= last_z <= 5.0;
    lines.push(format!("max z at 4096 = {last_z:.2}"));
    let mut prev = f64::INFINITY;
    for m in [256, 1024] {
        let cfg = NetworkConfig::new(6, m, 2, relu.clone(), 81);
        let rep = kernel_concentration(&cfg, &xs, 50, KernelKind::Tangent).unwrap();
        pass &= rep.mean_abs_error.mean < prev;
        prev = rep.mean_abs_error.mean;
        last_z = rep.max_z;
        lines.push(format!("NTK m={m}: err {:.2e}", rep.mean_abs_error.mean));
    }
    pass &= last_z <= 5.0;
    lines.push(format!("NTK max z at 1024 = {last_z:.2}"));
    outcome(pass, lines.join(", "))
}

fn c9_sq_decay() -> Outcome {
    let (depth, delta) = (40usize, 0.2);
    let m = (64.0 * depth as f64 / (delta * delta)).round() as usize;
    let relu = ActivationSpec::builtin("relu-normalized").unwrap();
    let cfg = NetworkConfig::new(2, m, depth, relu, 9).with_layer_normalization(true);
    let x = [1.0, 0.0];
    let y = [0.8, 0.6];
    let rep = correlation_decay_experiment(&cfg, &x, &y, 200).unwrap();
    let worst = rep
        .rho
        .iter()
        .zip(&rep.bound)
        .map(|(s, b)| s.mean.abs() - b - 4.0 * s.std_error)
        .fold(f64::NEG_INFINITY, f64::max);
    outcome(
        rep.within_envelope(4.0),
        format!(
            "m={m}, worst |mean ρ_h| − B − 4se = {worst:.3e}, fitted rate {:?} vs 1−μ/4 = {:.4}",
            rep.fitted_rate.map(|r| (r * 1e4).round() / 1e4),
            rep.reference_rate
        ),
    )
}

fn c10_rates() -> Outcome {
    let a = Matrix::from_fn(2, 2, |i, j| if i != j { 0.0 } else if i == 0 { 1.0 } else { 10.0 });
    let p = RegressionProblem::new(a, vec![0.9, -0.6]).unwrap();
    let gd = gd_top_layer(&p, p.optimal_step_size().unwrap(), 2000).unwrap();
    let gd_ok = gd.within_rate_bound() && (gd.kappa - 100.0).abs() < 1e-9;

    // Unit-norm features of a deep, per-layer normalized random network.
    let relu = ActivationSpec::builtin("relu-normalized").unwrap();
    let inputs = synthetic_inputs(16, 0.2, 10).unwrap();
    let mu = DualActivation::new(relu.clone()).unwrap().mu();
    let depth = depth_thresholds(mu, 0.2, 16).unwrap().l1 as usize;
    let net = sample_network(&NetworkConfig::new(32, 512, depth, relu, 10).with_layer_normalization(true)).unwrap();
    let rows: Vec<Vec<f64>> = inputs.vectors.iter().map(|x| feature_map(&net, x).unwrap()).collect();
    let labels: Vec<f64> = unit_inputs(1, 16, 11)[0].iter().map(|v| v.clamp(-1.0, 1.0)).collect();
    let p = RegressionProblem::new(Matrix::from_rows(&rows).unwrap(), labels).unwrap();
    let eps = 1e-3;
    let beta = p.beta();
    let finals: Vec<f64> = (0..20).map(|s| sgd_top_layer(&p, s, eps, None).unwrap().final_loss()).collect();
    let s = TrialSummary::from_samples(&finals);
    let run = sgd_top_layer(&p, 0, eps, None).unwrap();
    let (lo, _) = p.gram_extremes().unwrap();
    let budget = (8.0 * 16.0 * beta / lo).ceil() * (1.0 / eps).ln().ceil();
    let sgd_ok = s.mean <= eps + 4.0 * s.std_error && run.iterations as f64 <= budget && run.step_size == 0.5 / beta;
    outcome(
        gd_ok && sgd_ok,
        format!(
            "GD κ={:.1} envelope {}; SGD L={depth} β={beta:.3} κ={:.1}, steps {} (budget {budget}), mean loss {:.2e} ± {:.1e}",
            gd.kappa,
            gd.within_rate_bound(),
            run.kappa,
            run.iterations,
            s.mean,
            s.std_error
        ),
    )
}

fn c11_interpolation() -> Outcome {
    let relu = ActivationSpec::builtin("relu-normalized").unwrap();
    let mu = DualActivation::new(relu.clone()).unwrap().mu();
    let data = DataGenerator::Linear { dim: 8, noise: 0.0 };
    let seed = 11;
    let (xs, ys) = data.sample(64, seed, 0).unwrap();
    let gram = GramMatrix::from_vectors(&xs).unwrap();
    let delta = 1.0 - gram.max_off_diagonal();
    let depth = depth_thresholds(mu, delta, 64).unwrap().l1 as usize;
    let kbar = depthcond::conditioning::propagate_kernel(&gram, &DualActivation::new(relu.clone()).unwrap(), depth)
        .unwrap();
    let interp = min_norm_interpolator(&kbar, &ys).unwrap();
    let mut reports = Vec::new();
    // One comparator for every n, fitted on four times the largest sample.
    for n in [64, 128, 256] {
        reports.push(excess_risk_estimate(&relu, depth, n, 1024, 2000, &data, seed).unwrap());
    }
    let trend = reports.windows(2).all(|w| {
        let se = (w[0].std_error.powi(2) + w[1].std_error.powi(2)).sqrt();
        w[1].excess_risk <= w[0].excess_risk + 2.0 * se
    });
    let pass = interp.max_residual <= 1e-8 && trend;
    let rows: Vec<String> =
        reports.iter().map(|r| format!("n={} ER={:.3e}±{:.1e}", r.n, r.excess_risk, r.std_error)).collect();
    outcome(
        pass,
        format!("δ={delta:.3} L={depth} residual {:.1e}; {}", interp.max_residual, rows.join(", ")),
    )
}

fn c12_bn() -> Outcome {
    let mut r = rng::stream(12, &[], 0);
    let mut worst: f64 = 0.0;
    for name in ["relu", "step", "exp", "tanh-normalized", "relu-normalized"] {
        let s = ActivationSpec::builtin(name).unwrap();
        for _ in 0..10 {
            let m = 64;
            let batch: Vec<Vec<f64>> =
                (0..32).map(|_| (0..m).map(|_| r.gen_range(-3.0..3.0)).collect()).collect();
            let w: Vec<f64> = (0..m).map(|_| r.gen_range(-1.0..1.0)).collect();
            worst = worst.max(bn_invariance_check(&s, &batch, &w).unwrap().max_abs_deviation);
        }
    }
    outcome(worst <= 1e-10, format!("max deviation {worst:.2e} (tol 1e-10)"))
}

fn c13_uncentered() -> Outcome {
    let d = DualActivation::builtin("step-sqnorm").unwrap();
    let mut lines = Vec::new();
    let mut pass = true;
    for rho0 in [-0.9, -0.3, 0.0, 0.5, 0.95] {
        let t = uncentered_convergence(&d, rho0, 80).unwrap();
        pass &= t.within_bound() && t.errors[80] < 1e-8 && !t.saturating;
        lines.push(format!("ρ₀={rho0}: L₀={} err₈₀={:.1e}", t.l0, t.errors[80]));
    }
    let fp = d.fixed_point().unwrap();
    outcome(pass, format!("ρ̄={:.10}; {}", fp.rho_bar, lines.join(", ")))
}

fn main() -> ExitCode {
    type Criterion = (usize, &'static str, Duration, Box<dyn Fn() -> Outcome>);
    let top = std::rc::Rc::new(std::cell::OnceCell::new());
    let ntk = std::rc::Rc::new(std::cell::OnceCell::new());
    let (t3, t4, t5) = (top.clone(), top.clone(), ntk.clone());
    let secs = Duration::from_secs;
    let criteria: Vec<Criterion> = vec![
        (1, "μ table", secs(1), Box::new(c1_mu_table)),
        (2, "NormReLU constants", secs(5), Box::new(c2_normrelu)),
        (3, "correlation decay", secs(10), Box::new(move || c3_decay(t3.get_or_init(|| profiles(false))))),
        (4, "condition-number corollaries", secs(10), Box::new(move || c4_kappa(t4.get_or_init(|| profiles(false))))),
        (5, "NTK", secs(30), Box::new(move || c5_ntk(t5.get_or_init(|| profiles(true))))),
        (6, "eigenvalue lower bound", secs(60), Box::new(c6_eigen_lb)),
        (7, "generalized Hermite orthogonality", secs(30), Box::new(c7_orthogonality)),
        (8, "Monte Carlo concentration", secs(600), Box::new(c8_concentration)),
        (9, "SQ decay experiment", secs(600), Box::new(c9_sq_decay)),
        (10, "GD/SGD rates", secs(120), Box::new(c10_rates)),
        (11, "interpolation", secs(300), Box::new(c11_interpolation)),
        (12, "BN/LN invariance", secs(1), Box::new(c12_bn)),
        (13, "uncentered convergence", secs(5), Box::new(c13_uncentered)),
    ];
    let only: Option<Vec<usize>> =
        std::env::var("ACCEPTANCE_ONLY").ok().map(|s| s.split(',').filter_map(|t| t.trim().parse().ok()).collect());
    let mut failures = 0;
    for (id, name, budget, run) in criteria {
        if only.as_ref().is_some_and(|o| !o.contains(&id)) {
            continue;
        }
        let start = Instant::now();
        let out = run();
        let took = start.elapsed();
        let in_time = took <= budget;
        let pass = out.pass && in_time;
        failures += usize::from(!pass);
        println!(
            "criterion {id:>2} {}: {name} [{:.2}s / {}s{}] {}",
            if pass { "PASS" } else { "FAIL" },
            took.as_secs_f64(),
            budget.as_secs(),
            if in_time { "" } else { ", over budget" },
            out.detail
        );
    }
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failures} criterion(s) failed");
        ExitCode::FAILURE
    }
}
