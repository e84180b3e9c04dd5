//! Command-line orchestration: config parsing, experiment dispatch and
//! deterministic result files.

pub mod config;
pub mod output;
pub mod run;

use std::fs;
use std::path::PathBuf;
use std::time::Instant;

use clap::{Parser, Subcommand};

pub use config::{parse_config, ConfigErrors, Experiment, ExperimentConfig};
pub use output::Format;
pub use run::{run_experiment, Outcome, RunError};

#[derive(Debug, Parser)]
#[command(name = "conformal-lab", version, about = "Numerical experiments on self-conformal measures")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// TOML experiment config.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Overrides the config output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads; defaults to all cores.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
}

#[derive(Clone, Copy, Debug, Subcommand)]
pub enum Command {
    /// Check the standing hypotheses on the maps.
    Validate,
    /// Chaos-game samples, local dimension and doubling.
    Sample,
    /// Fourier coefficient scans and decay fits.
    Fourier,
    /// Norm decay of the twisted transfer operator.
    SpectralGap,
    /// UNI witness, T_N check, inducing certificate and non-concentration.
    Uni,
    /// Model construction and cylinder geometry.
    Model,
    /// Cone stability, L2 contraction and domination checks.
    Dolgopyat,
    /// Overshoot and stopping-angle laws of the renewal walk.
    Renewal,
    /// Per-|q| decay budget table.
    Pipeline,
}

impl Command {
    pub fn experiment(self) -> Experiment {
        match self {
            Command::Validate => Experiment::Validate,
            Command::Sample => Experiment::Sample,
            Command::Fourier => Experiment::Fourier,
            Command::SpectralGap => Experiment::SpectralGap,
            Command::Uni => Experiment::Uni,
            Command::Model => Experiment::Model,
            Command::Dolgopyat => Experiment::Dolgopyat,
            Command::Renewal => Experiment::Renewal,
            Command::Pipeline => Experiment::Pipeline,
        }
    }
}

/// Resolve the config for `experiment` from optional TOML text and overrides.
pub fn resolve_config(
    experiment: Experiment,
    text: Option<&str>,
    seed: Option<u64>,
    out: Option<PathBuf>,
) -> Result<ExperimentConfig, ConfigErrors> {
    let mut cfg = match text {
        Some(t) => parse_config(t)?,
        None => ExperimentConfig::default(),
    };
    if let Some(e) = cfg.experiment {
        if e != experiment {
            return Err(ConfigErrors(vec![format!(
                "experiment: config names `{}` but the command is `{}`",
                e.name(),
                experiment.name()
            )]));
        }
    }
    cfg.experiment = Some(experiment);
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(o) = out {
        cfg.output_dir = o;
    }
    Ok(cfg)
}

/// Run and write the results; returns the exit code.
pub fn execute(cfg: &ExperimentConfig, format: Format) -> Result<(i32, Outcome), RunError> {
    let outcome = run_experiment(cfg, format)?;
    outcome
        .artifacts
        .write(&cfg.output_dir, run::manifest_header(cfg, &outcome))?;
    Ok((outcome.exit_code(), outcome))
}

/// Entry point of the binary.
pub fn main_with(cli: Cli) -> i32 {
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: threads: {e}");
            return 1;
        }
    }
    let text = match &cli.config {
        Some(path) => match fs::read_to_string(path) {
            Ok(t) => Some(t),
            Err(e) => {
                eprintln!("error: {}: {e}", path.display());
                return 1;
            }
        },
        None => None,
    };
    let cfg = match resolve_config(cli.command.experiment(), text.as_deref(), cli.seed, cli.out.clone()) {
        Ok(c) => c,
        Err(e) => {
            for line in &e.0 {
                eprintln!("error: {line}");
            }
            return 1;
        }
    };
    let start = Instant::now();
    match execute(&cfg, cli.format) {
        Ok((code, outcome)) => {
            for f in &outcome.findings {
                println!("finding: {f}");
            }
            println!(
                "{} done in {:.2}s, results in {}",
                cfg.experiment.map(Experiment::name).unwrap_or("?"),
                start.elapsed().as_secs_f64(),
                cfg.output_dir.display()
            );
            code
        }
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
