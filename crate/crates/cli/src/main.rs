//! `tailspec` command-line driver.
//!
//! Exit codes: 0 success, 1 runtime or domain error, 2 configuration or parse error.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use tailspec_core::error::Error;
use tailspec_core::estimators::{estimate_conventional, estimate_two_step};
use tailspec_core::harness::{run_convergence_experiment, run_convergence_experiment_on};
use tailspec_core::output::emit_outputs;
use tailspec_core::sampling::{generate_dataset, read_samples_csv};
use tailspec_core::{spectral_measure_of, wasserstein_p, wasserstein_pp, DiscreteMeasure};

use config::{CliConfig, ConfigError};

#[derive(Parser)]
#[command(name = "tailspec", version, about = "Spectral-measure estimation for heavy-tailed linear factor models")]
struct Cli {
    /// JSON configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output file (simulate, estimate, wasserstein plan) or directory (experiment).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Replaces `model.seed` (simulate) or `experiment.base_seed` (experiment).
    #[arg(long, global = true)]
    seed_override: Option<u64>,
    /// Worker threads for experiments; defaults to all cores.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a sample batch from `model` and write it as CSV plus a JSON sidecar.
    Simulate,
    /// Estimate the spectral measure of a sample batch.
    Estimate {
        #[arg(value_enum)]
        kind: EstimatorKind,
        /// Sample CSV (header x1,...,xd).
        batch: PathBuf,
    },
    /// Run a convergence-rate experiment and write CSV tables and SVG charts.
    Experiment,
    /// Print the p-Wasserstein distance between two measure JSON files.
    Wasserstein {
        mu: PathBuf,
        nu: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        p: f64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum EstimatorKind {
    Conv,
    TwoStep,
}

enum Failure {
    Config(String),
    Runtime(Error),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.0)
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Runtime(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(Error::Io(e))
    }
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => e.exit(),
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("config error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("{}: {e}", e.name());
            ExitCode::from(1)
        }
    }
}

fn run(cli: &Cli) -> Outcome {
    match &cli.command {
        Command::Simulate => simulate(cli),
        Command::Estimate { kind, batch } => estimate(cli, *kind, batch),
        Command::Experiment => experiment(cli),
        Command::Wasserstein { mu, nu, p } => wasserstein(cli, mu, nu, *p),
    }
}

fn load_config(cli: &Cli) -> Result<CliConfig, ConfigError> {
    match &cli.config {
        Some(path) => CliConfig::load(path),
        None => Err(ConfigError("--config is required for this subcommand".into())),
    }
}

fn out_path(cli: &Cli) -> Result<&Path, ConfigError> {
    cli.out.as_deref().ok_or_else(|| ConfigError("--out is required for this subcommand".into()))
}

fn warn_outside_theory(alpha: f64, s: f64) {
    if s >= 0.5f64.min(1.0 / alpha) {
        eprintln!("warning: s = {s} >= min(1/2, 1/alpha) = {}; rate guarantees do not apply", 0.5f64.min(1.0 / alpha));
    }
}

fn simulate(cli: &Cli) -> Outcome {
    let cfg = load_config(cli)?;
    let out = out_path(cli)?;
    let model = cfg.model()?;
    let n = model.n.ok_or_else(|| ConfigError("model.n: required for simulate".into()))?;
    let seed = cli
        .seed_override
        .or(model.seed)
        .ok_or_else(|| ConfigError("model.seed: required for simulate".into()))?;
    let spec = cfg.template()?.instantiate(n).map_err(|e| ConfigError(format!("model: {e}")))?;
    let batch = generate_dataset(&spec, n, seed, model.stream_id)?;
    batch.save(out)?;
    Ok(())
}

fn estimate(cli: &Cli, kind: EstimatorKind, batch_path: &Path) -> Outcome {
    let cfg = load_config(cli)?;
    let out = out_path(cli)?;
    let file = std::fs::File::open(batch_path)?;
    let xs = read_samples_csv(std::io::BufReader::new(file))?;
    let d = xs.first().map(|x| x.len()).unwrap_or(0);
    let measure = match kind {
        EstimatorKind::Conv => {
            let c = cfg.conv(d)?;
            c.validate().map_err(|e| ConfigError(format!("estimator.conv: {e}")))?;
            estimate_conventional(&xs, &c)?
        }
        EstimatorKind::TwoStep => {
            let t = cfg.two_step(d)?;
            t.validate().map_err(|e| ConfigError(format!("estimator.two_step: {e}")))?;
            warn_outside_theory(t.alpha, t.s);
            estimate_two_step(&xs, &t)?.1
        }
    };
    std::fs::write(out, measure.to_json())?;
    if cfg.model.is_some() {
        let template = cfg.template()?;
        let a = template.loading_at(xs.len()).map_err(|e| ConfigError(format!("model: {e}")))?;
        let truth = spectral_measure_of(&a, template.alpha).map_err(|e| ConfigError(format!("model: {e}")))?;
        println!("{}", wasserstein_p(&measure, &truth, 1.0)?);
    }
    Ok(())
}

fn experiment(cli: &Cli) -> Outcome {
    let cfg = load_config(cli)?;
    let out = out_path(cli)?;
    let x = cfg.experiment(cli.seed_override)?;
    if let Some(t) = &x.two_step {
        warn_outside_theory(t.alpha, t.s);
    }
    let result = match cli.threads {
        Some(k) => run_convergence_experiment_on(&x, k)?,
        None => run_convergence_experiment(&x)?,
    };
    emit_outputs(&result, out)?;
    for f in &result.slope_fits {
        match f.fit {
            Some(fit) => println!("{}: slope {:.4} (r2 {:.3}, {} points)", f.estimator, fit.slope, fit.r2, f.n_points),
            None => println!("{}: no slope ({} usable points)", f.estimator, f.n_points),
        }
    }
    if result.failure_rate > 0.0 {
        eprintln!("warning: {:.1}% of replicates failed", 100.0 * result.failure_rate);
    }
    Ok(())
}

fn read_measure(path: &Path) -> Result<DiscreteMeasure, Failure> {
    let text = std::fs::read_to_string(path)?;
    DiscreteMeasure::from_json(&text).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))
}

fn wasserstein(cli: &Cli, mu: &Path, nu: &Path, p: f64) -> Outcome {
    if !(p >= 1.0) {
        return Err(Failure::Config(format!("--p must be >= 1, got {p}")));
    }
    let mu = read_measure(mu)?;
    let nu = read_measure(nu)?;
    let (cost, plan) = wasserstein_pp(&mu, &nu, p)?;
    let w = if p == 1.0 { cost } else { cost.max(0.0).powf(1.0 / p) };
    println!("{w}");
    if let Some(out) = &cli.out {
        std::fs::write(out, plan.to_csv())?;
    }
    Ok(())
}
