use crate::output::{Cell, Report, Table, Verdict};
use crate::params::{get, nonempty, params, Depth, Labels, Params};
use anyhow::{bail, Context, Result};
use clap::ValueEnum;
use depthcond::conditioning::{
    depth_thresholds, propagate_kernel, synthetic_inputs, verify_ntk, verify_top_layer, DepthProfile,
};
use depthcond::dual::{NormRelu, BUILTIN_NAMES};
use depthcond::montecarlo::{
    bn_invariance_check, correlation_decay_experiment, feature_map, kernel_concentration,
    one_layer_min_singular_experiment, sample_network, KernelKind,
};
use depthcond::rng;
use depthcond::training::{
    excess_risk_estimate, gd_top_layer, min_norm_interpolator, sgd_top_layer, DataGenerator,
};
use depthcond::{ActivationSpec, DualActivation, GramMatrix, Matrix, NetworkConfig, RegressionProblem};
use rand::Rng;
use serde_json::json;
use std::path::PathBuf;

fn activation(name: &str) -> Result<ActivationSpec> {
    ActivationSpec::builtin(name).map_err(|_| {
        anyhow::anyhow!("unknown activation '{name}'; known: {}, normrelu:<c>", BUILTIN_NAMES.join(", "))
    })
}

fn dual(name: &str) -> Result<DualActivation> {
    Ok(DualActivation::new(activation(name)?)?)
}

/// `L1` for the measured separation `1 − max |K_ij|` of `gram`.
fn resolve_depth(depth: Depth, mu: f64, gram: &GramMatrix) -> Result<usize> {
    match depth {
        Depth::Fixed(l) => Ok(l),
        Depth::L1 => {
            let delta = 1.0 - gram.max_off_diagonal();
            if !(delta > 0.0) {
                bail!("two inputs coincide up to sign, so no depth separates them");
            }
            Ok(depth_thresholds(mu, delta.min(1.0), gram.n())?.l1 as usize)
        }
    }
}

fn labels_for(kind: Labels, xs: &[Vec<f64>], seed: u64) -> Vec<f64> {
    match kind {
        Labels::Zeros => vec![0.0; xs.len()],
        Labels::Noise => {
            let mut r = rng::stream(seed, &[rng::domain::LABELS], 0);
            xs.iter().map(|_| r.gen_range(-1.0..=1.0)).collect()
        }
        Labels::Linear => {
            let dim = xs.first().map_or(1, Vec::len);
            let theta = rng::unit_vector(&mut rng::stream(seed, &[rng::domain::LABELS], 1), dim);
            xs.iter().map(|x| depthcond::linalg::dot(&theta, x).clamp(-1.0, 1.0)).collect()
        }
    }
}

params! {
    /// σ̂(ρ) on a grid, with μ and μ̃, for each activation.
    pub struct DualTable {
        /// Comma-separated activation names.
        #[arg(long, value_delimiter = ',')]
        activations: Vec<String>,
        /// Correlations at which to evaluate the dual.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        rho: Vec<f64> = (0..=20).map(|i| -1.0 + 0.1 * i as f64).collect(),
    }
}

pub fn dual_table(p: &DualTable) -> Result<Report> {
    let names: Vec<String> =
        p.activations.iter().flatten().map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect();
    if names.is_empty() {
        bail!("--activations is empty; known: {}, normrelu:<c>", BUILTIN_NAMES.join(", "));
    }
    let rhos = get(&p.rho);
    nonempty("rho", &rhos)?;
    let mut table = Table::new(&["activation", "mu", "muTilde", "rho", "dual", "derivative"]);
    for name in &names {
        let d = dual(name)?;
        for &r in &rhos {
            table.push(vec![
                name.as_str().into(),
                d.mu().into(),
                d.mu_tilde().into(),
                r.into(),
                d.eval(r)?.into(),
                d.derivative(r)?.into(),
            ]);
        }
    }
    Ok(Report { table, ..Default::default() })
}

#[derive(Clone, Copy, Debug, ValueEnum, serde::Serialize)]
pub enum ProfileKind {
    Toplayer,
    Ntk,
}

params! {
    /// Depth profile of the limiting kernel or tangent kernel against the bounds.
    pub struct ProfileArgs {
        #[arg(long)]
        activation: String = "relu-normalized".into(),
        /// Synthetic inputs with separation exactly δ: N DELTA SEED.
        #[arg(long, num_args = 3, value_names = ["N", "DELTA", "SEED"], conflicts_with = "gram")]
        synthetic: Vec<f64>,
        /// Gram matrix file (.csv, or .json with {n, unitDiagonal, entries}).
        #[arg(long, value_name = "FILE")]
        gram: PathBuf,
        /// Largest depth.
        #[arg(long)]
        lmax: usize = 60,
    }
}

fn load_gram(p: &ProfileArgs) -> Result<GramMatrix> {
    match (&p.synthetic, &p.gram) {
        (Some(s), None) => {
            let [n, delta, seed] = s[..] else { bail!("--synthetic takes N DELTA SEED") };
            if n < 1.0 || n.fract() != 0.0 || seed < 0.0 || seed.fract() != 0.0 {
                bail!("--synthetic N and SEED must be non-negative integers");
            }
            Ok(synthetic_inputs(n as usize, delta, seed as u64)?.gram)
        }
        (None, Some(path)) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
            let parsed = if path.extension().is_some_and(|e| e == "json") {
                GramMatrix::from_json_str(&text)
            } else {
                GramMatrix::from_csv_str(&text)
            };
            parsed.with_context(|| format!("in {}", path.display()))
        }
        (Some(_), Some(_)) => bail!("give either --synthetic or --gram, not both"),
        (None, None) => bail!("give the inputs with --synthetic N DELTA SEED or --gram FILE"),
    }
}

pub fn profile(kind: ProfileKind, p: &ProfileArgs) -> Result<Report> {
    let d = dual(&get(&p.activation))?;
    let k = load_gram(p)?;
    let prof: DepthProfile = match kind {
        ProfileKind::Toplayer => verify_top_layer(&k, &d, get(&p.lmax))?,
        ProfileKind::Ntk => verify_ntk(&k, &d, get(&p.lmax))?,
    };
    let mut table = Table::new(&["L", "maxOffDiag", "lambdaMin", "lambdaMax", "kappa", "boundB", "boundKappa"]);
    for r in &prof.records {
        table.push(vec![
            r.depth.into(),
            r.max_off_diag.into(),
            r.lambda_min.into(),
            r.lambda_max.into(),
            r.kappa.into(),
            r.bound_b.into(),
            r.bound_kappa.into(),
        ]);
    }
    let detail = match prof.violations.first() {
        None => format!("{} depths checked", prof.records.len()),
        Some(v) => format!("{} violations; first: {} at L={}", prof.violations.len(), v.check, v.depth),
    };
    Ok(Report {
        table,
        summary: json!({
            "mu": prof.mu,
            "linear": prof.linear,
            "deltaSeparation": prof.delta_separation,
            "deltaNonsingular": prof.delta_nonsingular,
            "separation": prof.separation,
            "nonsingular": prof.nonsingular,
            "violations": prof.violations,
        }),
        verdicts: vec![Verdict::new("bounds-respected", prof.passed(), detail)],
    })
}

fn unit_inputs(n: usize, dim: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut r = rng::stream(seed, &[rng::domain::INPUTS, n as u64, dim as u64], 0);
    (0..n).map(|_| rng::unit_vector(&mut r, dim)).collect()
}

params! {
    /// Finite-width kernel against its infinite-width limit, over widths.
    pub struct Concentration {
        #[arg(long)]
        activation: String = "relu-normalized".into(),
        /// Widths to sweep.
        #[arg(long, value_delimiter = ',')]
        m: Vec<usize>,
        #[arg(long, visible_alias = "L")]
        depth: usize,
        /// Number of random unit inputs.
        #[arg(long)]
        n: usize = 4,
        #[arg(long)]
        input_dim: usize = 6,
        #[arg(long)]
        trials: usize = 50,
        /// Project every layer output to the unit sphere.
        #[arg(long)]
        normalize_layers: bool = false,
    }
}

pub fn concentration(p: &mut Concentration, kind: KernelKind) -> Result<Report> {
    let tangent = kind == KernelKind::Tangent;
    p.m.get_or_insert_with(|| if tangent { vec![256, 1024] } else { vec![256, 1024, 4096] });
    p.depth.get_or_insert(if tangent { 2 } else { 3 });
    let widths = get(&p.m);
    nonempty("m", &widths)?;
    let spec = activation(&get(&p.activation))?;
    let xs = unit_inputs(get(&p.n), get(&p.input_dim), p.seed());
    let mut table = Table::new(&["m", "meanAbsError", "stdError", "maxZ"]);
    let mut reports = Vec::new();
    for &m in &widths {
        let cfg = NetworkConfig::new(get(&p.input_dim), m, get(&p.depth), spec.clone(), p.seed())
            .with_layer_normalization(get(&p.normalize_layers));
        let rep = kernel_concentration(&cfg, &xs, get(&p.trials), kind)?;
        table.push(vec![m.into(), rep.mean_abs_error.mean.into(), rep.mean_abs_error.std_error.into(), rep.max_z.into()]);
        reports.push(rep);
    }
    let decreasing = reports.windows(2).all(|w| w[1].mean_abs_error.mean < w[0].mean_abs_error.mean);
    let last = reports.last().expect("at least one width");
    Ok(Report {
        table,
        summary: json!({ "entries": reports.iter().map(|r| json!({"m": r.width, "entries": r.entries})).collect::<Vec<_>>() }),
        verdicts: vec![
            Verdict::new("error-decreasing-in-m", decreasing, "mean |K_ij − K̄_ij| over widths"),
            Verdict::new(
                "widest-within-5-se",
                last.max_z <= 5.0,
                format!("max z = {:.3} at m = {}", last.max_z, last.width),
            ),
        ],
    })
}

params! {
    /// Correlation of two inputs across depth in a per-layer normalized network.
    pub struct Decay {
        #[arg(long)]
        activation: String = "relu-normalized".into(),
        #[arg(long)]
        m: usize = 2048,
        #[arg(long, visible_alias = "L")]
        depth: usize = 40,
        /// Input correlation x·y.
        #[arg(long, allow_hyphen_values = true)]
        rho: f64 = 0.8,
        #[arg(long)]
        trials: usize = 200,
        #[arg(long)]
        normalize_layers: bool = true,
        /// Envelope slack in standard errors.
        #[arg(long)]
        k: f64 = 4.0,
    }
}

pub fn decay(p: &Decay) -> Result<Report> {
    let rho = get(&p.rho);
    if !(rho.abs() <= 1.0) {
        bail!("--rho {rho} outside [-1, 1]");
    }
    let x = [1.0, 0.0];
    let y = [rho, (1.0 - rho * rho).max(0.0).sqrt()];
    let cfg = NetworkConfig::new(2, get(&p.m), get(&p.depth), activation(&get(&p.activation))?, p.seed())
        .with_layer_normalization(get(&p.normalize_layers));
    let rep = correlation_decay_experiment(&cfg, &x, &y, get(&p.trials))?;
    let mut table = Table::new(&["h", "meanRho", "stdError", "boundB"]);
    for (h, (s, b)) in rep.rho.iter().zip(&rep.bound).enumerate() {
        table.push(vec![h.into(), s.mean.into(), s.std_error.into(), (*b).into()]);
    }
    let k = get(&p.k);
    Ok(Report {
        table,
        summary: json!({
            "mu": rep.mu,
            "delta": rep.delta,
            "l0": rep.l0,
            "fittedRate": rep.fitted_rate,
            "referenceRate": rep.reference_rate,
        }),
        verdicts: vec![Verdict::new(
            "within-envelope",
            rep.within_envelope(k),
            format!("|mean ρ_h| ≤ B(h, δ) + {k}·stdError"),
        )],
    })
}

params! {
    /// Smallest eigenvalue of one-layer ReLU features on separated inputs.
    pub struct SigmaMin {
        #[arg(long)]
        n: usize = 4,
        #[arg(long)]
        m: usize = 4096,
        #[arg(long)]
        delta: f64 = 0.5,
        #[arg(long)]
        trials: usize = 50,
    }
}

pub fn sigma_min(p: &SigmaMin) -> Result<Report> {
    let rep = one_layer_min_singular_experiment(get(&p.n), get(&p.m), get(&p.delta), get(&p.trials), p.seed())?;
    let mut table = Table::new(&["trial", "sigmaMin"]);
    for (t, v) in rep.per_trial.iter().enumerate() {
        table.push(vec![t.into(), (*v).into()]);
    }
    Ok(Report {
        table,
        summary: json!({
            "mean": rep.summary.mean,
            "stdError": rep.summary.std_error,
            "min": rep.min,
            "ratioToDelta1.5OverN3": rep.ratio,
        }),
        verdicts: vec![Verdict::new("all-positive", rep.all_positive, format!("min σ_min = {:.3e}", rep.min))],
    })
}

params! {
    /// Batch and layer normalization outputs for a raw activation and its normalized form.
    pub struct BnInvariance {
        #[arg(long)]
        activation: String = "relu".into(),
        /// Batch size.
        #[arg(long)]
        batch: usize = 32,
        /// Width.
        #[arg(long)]
        m: usize = 64,
        #[arg(long)]
        trials: usize = 10,
        /// Largest allowed deviation.
        #[arg(long)]
        tol: f64 = 1e-10,
    }
}

pub fn bn_invariance(p: &BnInvariance) -> Result<Report> {
    let spec = activation(&get(&p.activation))?;
    let (b, m) = (get(&p.batch), get(&p.m));
    let mut table = Table::new(&["trial", "batchNorm", "layerNorm", "maxAbsDeviation"]);
    let mut worst = 0.0f64;
    for t in 0..get(&p.trials) {
        let mut r = rng::stream(p.seed(), &[rng::domain::INPUTS, t as u64], 0);
        let batch: Vec<Vec<f64>> = (0..b).map(|_| (0..m).map(|_| r.gen_range(-3.0..3.0)).collect()).collect();
        let w: Vec<f64> = (0..m).map(|_| r.gen_range(-1.0..1.0)).collect();
        let rep = bn_invariance_check(&spec, &batch, &w)?;
        worst = worst.max(rep.max_abs_deviation);
        table.push(vec![t.into(), rep.batch_norm.into(), rep.layer_norm.into(), rep.max_abs_deviation.into()]);
    }
    let tol = get(&p.tol);
    Ok(Report {
        table,
        summary: json!({ "maxAbsDeviation": worst }),
        verdicts: vec![Verdict::new("deviation-within-tol", worst <= tol, format!("{worst:.3e} ≤ {tol:e}"))],
    })
}

params! {
    /// Top-layer training on finite-width features of synthetic inputs.
    pub struct Train {
        #[arg(long)]
        activation: String = "relu-normalized".into(),
        /// Number of training examples.
        #[arg(long)]
        n: usize = 16,
        /// Separation of the synthetic inputs.
        #[arg(long)]
        delta: f64 = 0.2,
        /// Width of the feature network.
        #[arg(long)]
        m: usize = 512,
        /// Depth, or L1 for the measured separation.
        #[arg(long, visible_alias = "L")]
        depth: Depth = Depth::L1,
        #[arg(long, value_enum)]
        labels: Labels = Labels::Linear,
        #[arg(long)]
        normalize_layers: bool = true,
        /// Gradient descent iterations.
        #[arg(long)]
        iterations: usize = 2000,
        /// Gradient descent step size [default: 2/(λ_min + λ_max) of the Hessian].
        #[arg(long)]
        eta: f64,
        /// Target loss for stochastic gradient descent.
        #[arg(long)]
        eps: f64 = 1e-3,
        /// Bound on the squared feature norms [default: the measured maximum].
        #[arg(long)]
        beta: f64,
    }
}

fn training_problem(p: &Train) -> Result<(RegressionProblem, usize, GramMatrix, Vec<f64>)> {
    let spec = activation(&get(&p.activation))?;
    let d = DualActivation::new(spec.clone())?;
    let inputs = synthetic_inputs(get(&p.n), get(&p.delta), p.seed())?;
    let depth = resolve_depth(get(&p.depth), d.mu(), &inputs.gram)?;
    let labels = labels_for(get(&p.labels), &inputs.vectors, p.seed());
    let dim = inputs.vectors[0].len();
    let net = sample_network(
        &NetworkConfig::new(dim, get(&p.m), depth, spec, p.seed()).with_layer_normalization(get(&p.normalize_layers)),
    )?;
    let rows = inputs.vectors.iter().map(|x| feature_map(&net, x)).collect::<depthcond::Result<Vec<_>>>()?;
    let problem = RegressionProblem::new(Matrix::from_rows(&rows)?, labels.clone())?;
    Ok((problem, depth, inputs.gram, labels))
}

fn run_table(run: &depthcond::TrainRun) -> Table {
    let mut table = Table::new(&["iteration", "loss", "rateBound"]);
    for ((s, l), b) in run.steps.iter().zip(&run.loss).zip(&run.rate_bound) {
        table.push(vec![(*s).into(), (*l).into(), (*b).into()]);
    }
    table
}

pub fn train_gd(p: &Train) -> Result<Report> {
    let (problem, depth, _, _) = training_problem(p)?;
    let eta = match p.eta {
        Some(e) => e,
        None => problem.optimal_step_size()?,
    };
    let run = gd_top_layer(&problem, eta, get(&p.iterations))?;
    Ok(Report {
        table: run_table(&run),
        summary: json!({ "depth": depth, "stepSize": eta, "kappa": run.kappa, "lambdaMin": run.lambda_min,
                         "lambdaMax": run.lambda_max, "finalLoss": run.final_loss() }),
        verdicts: vec![Verdict::new(
            "rate-envelope",
            run.within_rate_bound(),
            format!("L(w_t) ≤ exp(−t/(4κ))·L(w_0) with κ = {:.4}", run.kappa),
        )],
    })
}

pub fn train_sgd(p: &Train) -> Result<Report> {
    let (problem, depth, _, _) = training_problem(p)?;
    let eps = get(&p.eps);
    let run = sgd_top_layer(&problem, p.seed(), eps, p.beta)?;
    let initial = run.loss[0];
    Ok(Report {
        table: run_table(&run),
        summary: json!({ "depth": depth, "stepSize": run.step_size, "iterations": run.iterations,
                         "kappa": run.kappa, "finalLoss": run.final_loss() }),
        // The guarantee is on the expected loss; a single run is checked
        // against ε times the starting loss.
        verdicts: vec![Verdict::new(
            "reached-eps",
            run.final_loss() <= eps * initial.max(f64::MIN_POSITIVE),
            format!("final loss {:.3e} after {} steps", run.final_loss(), run.iterations),
        )],
    })
}

pub fn train_interpolate(p: &Train) -> Result<Report> {
    let d = dual(&get(&p.activation))?;
    let inputs = synthetic_inputs(get(&p.n), get(&p.delta), p.seed())?;
    let depth = resolve_depth(get(&p.depth), d.mu(), &inputs.gram)?;
    let labels = labels_for(get(&p.labels), &inputs.vectors, p.seed());
    let kbar = propagate_kernel(&inputs.gram, &d, depth)?;
    let fit = min_norm_interpolator(&kbar, &labels)?;
    let mut table = Table::new(&["i", "label", "dualWeight", "residual"]);
    for (i, ((y, a), r)) in labels.iter().zip(&fit.dual_weights).zip(&fit.train_residuals).enumerate() {
        table.push(vec![i.into(), (*y).into(), (*a).into(), (*r).into()]);
    }
    Ok(Report {
        table,
        summary: json!({ "depth": depth, "kappa": fit.kappa, "normSq": fit.norm_sq, "maxResidual": fit.max_residual }),
        verdicts: vec![Verdict::new(
            "interpolates",
            fit.max_residual <= 1e-8,
            format!("max residual {:.3e}", fit.max_residual),
        )],
    })
}

params! {
    /// Test excess risk of the minimum-norm kernel interpolator over sample sizes.
    pub struct Risk {
        #[arg(long)]
        activation: String = "relu-normalized".into(),
        /// Training sizes.
        #[arg(long, value_delimiter = ',')]
        n: Vec<usize> = vec![64, 128, 256],
        /// Size of the reference sample [default: 4 × the largest n].
        #[arg(long)]
        reference_n: usize,
        #[arg(long)]
        n_test: usize = 2000,
        /// Input dimension.
        #[arg(long)]
        dim: usize = 8,
        /// Depth, or L1 for the separation measured on the first training set.
        #[arg(long, visible_alias = "L")]
        depth: Depth = Depth::L1,
        #[arg(long, value_enum)]
        labels: Labels = Labels::Linear,
        /// Label noise level for linear labels.
        #[arg(long)]
        noise: f64 = 0.0,
    }
}

pub fn train_risk(p: &mut Risk) -> Result<Report> {
    let ns = get(&p.n);
    nonempty("n", &ns)?;
    let reference = *p.reference_n.get_or_insert(4 * ns.iter().max().expect("non-empty"));
    let spec = activation(&get(&p.activation))?;
    let d = DualActivation::new(spec.clone())?;
    let dim = get(&p.dim);
    let data = match get(&p.labels) {
        Labels::Linear => DataGenerator::Linear { dim, noise: get(&p.noise) },
        Labels::Noise => DataGenerator::Noise { dim },
        Labels::Zeros => DataGenerator::Zero { dim },
    };
    let (xs, _) = data.sample(ns[0], p.seed(), 0)?;
    let depth = resolve_depth(get(&p.depth), d.mu(), &GramMatrix::from_vectors(&xs)?)?;
    let mut table = Table::new(&[
        "n",
        "excessRisk",
        "stdError",
        "testRisk",
        "referenceRisk",
        "predictorNorm",
        "maxTrainResidual",
        "kappa",
    ]);
    let mut reports = Vec::new();
    for &n in &ns {
        let r = excess_risk_estimate(&spec, depth, n, reference, get(&p.n_test), &data, p.seed())?;
        table.push(vec![
            n.into(),
            r.excess_risk.into(),
            r.std_error.into(),
            r.test_risk.into(),
            r.reference_risk.into(),
            r.predictor_norm.into(),
            r.max_train_residual.into(),
            r.kappa.into(),
        ]);
        reports.push(r);
    }
    let trend = reports.windows(2).all(|w| {
        let se = (w[0].std_error.powi(2) + w[1].std_error.powi(2)).sqrt();
        w[1].excess_risk <= w[0].excess_risk + 2.0 * se
    });
    Ok(Report {
        table,
        summary: json!({ "depth": depth, "referenceN": reference }),
        verdicts: vec![Verdict::new("non-increasing-in-n", trend, "within 2 combined standard errors")],
    })
}

params! {
    /// NormReLU constants for a given kink.
    pub struct NormReluArgs {
        /// Kink position.
        #[arg(long, allow_hyphen_values = true)]
        c: f64 = depthcond::dual::NORMRELU_DEFAULT_C,
        /// Target accuracy for the depth L̂ after which norms settle.
        #[arg(long)]
        eps: f64 = 0.01,
    }
}

pub fn normrelu(p: &NormReluArgs) -> Result<Report> {
    let r = NormRelu::new(get(&p.c))?;
    let k = r.constants;
    let mut table = Table::new(&["quantity", "value"]);
    let rows: [(&str, f64); 10] = [
        ("c", k.c),
        ("b", k.b),
        ("lambda", k.lambda),
        ("mu", k.mu),
        ("alphaMinus", r.alpha_minus()),
        ("alphaPlus", r.alpha_plus()),
        ("bias0.5", r.bias(0.5)?),
        ("bias2", r.bias(2.0)?),
        ("deltaPrime", r.delta_prime()),
        ("lHat", r.l_hat(get(&p.eps))),
    ];
    for (name, v) in rows {
        table.push(vec![Cell::from(name), v.into()]);
    }
    Ok(Report { table, ..Default::default() })
}
