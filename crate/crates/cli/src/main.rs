//! `depthcond`: infinite-width kernels, tangent kernels and depth-driven
//! conditioning from the command line.
//!
//! Exit status is 0 when every verdict passes, 1 when a verdict fails (a
//! JSON summary goes to stderr), 2 for usage and config errors and 3 when a
//! computation cannot be carried out.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod output;
mod params;

use clap::{Parser, Subcommand};
use commands::*;
use depthcond::montecarlo::KernelKind;
use output::{render, write_atomic, Provenance, Report};
use params::{resolve, Params};
use serde_json::json;
use std::io::Write;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "depthcond", version, about = "Depth-driven conditioning of deep random networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Dual activation values with μ and μ̃.
    DualTable(DualTable),
    /// Kernel or tangent-kernel depth profile checked against the bounds.
    Profile {
        #[arg(value_enum)]
        kind: ProfileKind,
        #[command(flatten)]
        params: ProfileArgs,
    },
    /// Finite-width Monte Carlo experiments.
    #[command(subcommand)]
    Simulate(Simulate),
    /// Top-layer training and kernel interpolation.
    #[command(subcommand)]
    Train(TrainCmd),
    /// NormReLU constants.
    Normrelu(NormReluArgs),
}

#[derive(Subcommand)]
enum Simulate {
    /// Empirical kernel against the limit kernel over widths.
    Kernel(Concentration),
    /// Empirical tangent kernel against the limit over widths.
    Ntk(Concentration),
    /// Correlation of two inputs across depth.
    Decay(Decay),
    /// Smallest eigenvalue of one-layer ReLU features.
    SigmaMin(SigmaMin),
    /// Normalization invariance of raw and normalized activations.
    BnInvariance(BnInvariance),
}

#[derive(Subcommand)]
enum TrainCmd {
    /// Full-batch gradient descent.
    Gd(Train),
    /// Restarted stochastic gradient descent.
    Sgd(Train),
    /// Minimum-norm interpolator of the limit kernel.
    Interpolate(Train),
    /// Excess risk of the interpolator across sample sizes.
    Risk(Risk),
}

enum Failure {
    Usage(anyhow::Error),
    Compute(anyhow::Error),
}

fn classify(e: anyhow::Error) -> Failure {
    use depthcond::Error as E;
    match e.downcast_ref::<E>() {
        Some(E::Numeric(_) | E::Resource(_) | E::Precondition(_) | E::Io(_)) => Failure::Compute(e),
        Some(_) => Failure::Usage(e),
        None if e.downcast_ref::<std::io::Error>().is_some() => Failure::Compute(e),
        None => Failure::Usage(e),
    }
}

/// Resolves parameters, runs `f` and writes the output.
fn execute<P: Params>(
    name: &str,
    flags: P,
    f: impl FnOnce(&mut P) -> anyhow::Result<Report>,
) -> Result<bool, Failure> {
    let mut p = resolve(flags).map_err(Failure::Usage)?;
    if let Some(t) = p.threads() {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| Failure::Usage(anyhow::anyhow!("cannot set thread count: {e}")))?;
    }
    let report = f(&mut p).map_err(classify)?;
    let prov = Provenance {
        command: name.to_string(),
        config: serde_json::to_value(&p).expect("parameters serialize"),
        seed: p.seed(),
    };
    let text = render(&report, &prov, p.format());
    match p.out() {
        Some(path) => write_atomic(path, &text).map_err(Failure::Compute)?,
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes()).and_then(|_| out.flush()).map_err(|e| Failure::Compute(e.into()))?;
        }
    }
    if !report.passed() {
        eprintln!("{}", report.failure_json(name));
    }
    Ok(report.passed())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::DualTable(p) => execute("dual-table", p, |p| dual_table(p)),
        Command::Profile { kind, params } => {
            let name = match kind {
                ProfileKind::Toplayer => "profile toplayer",
                ProfileKind::Ntk => "profile ntk",
            };
            execute(name, params, |p| profile(kind, p))
        }
        Command::Simulate(s) => match s {
            Simulate::Kernel(p) => execute("simulate kernel", p, |p| concentration(p, KernelKind::Features)),
            Simulate::Ntk(p) => execute("simulate ntk", p, |p| concentration(p, KernelKind::Tangent)),
            Simulate::Decay(p) => execute("simulate decay", p, |p| decay(p)),
            Simulate::SigmaMin(p) => execute("simulate sigma-min", p, |p| sigma_min(p)),
            Simulate::BnInvariance(p) => execute("simulate bn-invariance", p, |p| bn_invariance(p)),
        },
        Command::Train(t) => match t {
            TrainCmd::Gd(p) => execute("train gd", p, |p| train_gd(p)),
            TrainCmd::Sgd(p) => execute("train sgd", p, |p| train_sgd(p)),
            TrainCmd::Interpolate(p) => execute("train interpolate", p, |p| train_interpolate(p)),
            TrainCmd::Risk(p) => execute("train risk", p, train_risk),
        },
        Command::Normrelu(p) => execute("normrelu", p, |p| normrelu(p)),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(Failure::Usage(e)) => {
            eprintln!("{}", json!({ "status": "error", "kind": "usage", "message": format!("{e:#}") }));
            ExitCode::from(2)
        }
        Err(Failure::Compute(e)) => {
            eprintln!("{}", json!({ "status": "error", "kind": "compute", "message": format!("{e:#}") }));
            ExitCode::from(3)
        }
    }
}
