//! Command-line front end: scenario files in, result bundles out.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod commands;
pub mod config;
pub mod error;
pub mod output;
pub mod svg;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::commands::Context;
use crate::config::{Format, Scenario};
use crate::error::{CliError, CliResult};
use crate::output::Bundle;

#[derive(Debug, Parser)]
#[command(name = "stoch-ham", version, about = "Stochastic Hamiltonian systems: actions, most probable paths and Monte Carlo")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Scenario file (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Overrides the scenario seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Worker threads; defaults to the available cores. Results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Overrides the output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    /// Overrides the table format.
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Single path or ensemble, with deterministic and integrable references.
    Simulate,
    /// Most probable path by action minimization.
    Mpp,
    /// Onsager-Machlup action of a path.
    Om,
    /// Hamiltonian density over an ensemble.
    Density,
    /// Tube probabilities across noise intensities.
    LdpScan,
    /// Small-ball exponent of Brownian motion in the Holder norm.
    Smallball,
    /// Torus stay probabilities and action deviation.
    Torus,
    /// Schema, gradient and diffusion-bound checks without running.
    Validate,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Mpp => "mpp",
            Command::Om => "om",
            Command::Density => "density",
            Command::LdpScan => "ldp-scan",
            Command::Smallball => "smallball",
            Command::Torus => "torus",
            Command::Validate => "validate",
        }
    }
}

/// What a successful invocation produced.
#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Bundle(PathBuf),
    Validated(commands::ValidationReport),
}

/// Parses arguments and runs; returns the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(Outcome::Bundle(dir)) => {
            println!("wrote {}", dir.display());
            0
        }
        Ok(Outcome::Validated(report)) => {
            for w in &report.warnings {
                eprintln!("warning: {w}");
            }
            println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: &Cli) -> CliResult<Outcome> {
    match cli.threads {
        Some(0) => Err(CliError::Config("--threads must be positive".into())),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| CliError::Config(format!("cannot start {n} worker threads: {e}")))?;
            pool.install(|| dispatch(cli))
        }
        None => dispatch(cli),
    }
}

fn dispatch(cli: &Cli) -> CliResult<Outcome> {
    let path = cli.config.as_deref().ok_or_else(|| CliError::Config("--config is required".into()))?;
    let (scenario, text) = Scenario::load(path)?;
    let seed = cli.seed.unwrap_or(scenario.seed);
    let experiment = scenario.experiment();
    if cli.command == Command::Validate {
        let report = commands::validate(&scenario, seed)?;
        if report.passed() {
            return Ok(Outcome::Validated(report));
        }
        for w in &report.warnings {
            eprintln!("warning: {w}");
        }
        return Err(CliError::Validation(report.failures.join("; ")));
    }
    if cli.command.name() != experiment.name() {
        return Err(CliError::Config(format!(
            "`{}` was requested but the scenario describes a `{}` experiment",
            cli.command.name(),
            experiment.name()
        )));
    }
    let dir = cli.out.clone().unwrap_or_else(|| scenario.output.dir.clone());
    let format = cli.format.unwrap_or(scenario.output.format);
    let bundle = Bundle::create(&dir, format, scenario.output.plots, &text)?;
    let base_dir = path.parent().unwrap_or(Path::new("."));
    let ctx = Context { scenario: &scenario, config_text: &text, base_dir, seed, bundle };
    commands::execute(ctx).map(Outcome::Bundle)
}
