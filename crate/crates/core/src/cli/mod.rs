//! The `dquon` command line: single-task subcommands, config-driven runs and
//! the self-test suite.
//!
//! Exit status is 0 when every check passes, 1 on a tolerance failure and 2
//! on a configuration or I/O error.

pub mod config;
pub mod run;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::qcore::{BetaSequence, QParam};

pub use config::{ExperimentConfig, FamilyConfig, TaskConfig, TaskEntry, TaskKind, ZGrid};
pub use run::{run, RunOptions, Summary};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("task failed: {0}")]
    Task(String),
}

impl CliError {
    pub(crate) fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        CliError::Io { path: path.to_path_buf(), message: e.to_string() }
    }
}

#[derive(Debug, Parser)]
#[command(name = "dquon", version, about = "Deformed quon algebras and bi-coherent states")]
pub struct Cli {
    /// Directory for summary.json, metrics.csv and task artifacts.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Seed for the random test vectors; overrides the config value.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Multiplies every default tolerance.
    #[arg(long, global = true, default_value_t = 1.0)]
    pub tolerance_scale: f64,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print β_n², β_n and β_{n}! for n < n-max.
    Beta {
        #[arg(long, default_value_t = 0.5)]
        q: f64,
        #[arg(long, default_value_t = 10)]
        n_max: usize,
    },
    /// q-mutator residual of the pair; writes a.csv and b.csv.
    Mutator(FockArgs),
    /// Biorthogonality, ladder and number-operator checks; writes family.json.
    Family(FockArgs),
    /// Metric operator checks.
    Theta(FockArgs),
    /// Bi-coherent states on a polar grid; writes bicoherent.csv.
    Bicoherent {
        #[command(flatten)]
        fock: FockArgs,
        /// Outer radius as a fraction of ρ.
        #[arg(long, default_value_t = 0.9)]
        radius_fraction: f64,
        #[arg(long, default_value_t = 5)]
        n_r: usize,
        #[arg(long, default_value_t = 8)]
        n_theta: usize,
    },
    /// Moment-matched quadrature and the resolution of the identity.
    Resolution {
        #[command(flatten)]
        fock: FockArgs,
        #[arg(long, default_value_t = 12)]
        k_mom: usize,
        #[arg(long, default_value_t = 64)]
        n_theta: usize,
        #[arg(long, default_value_t = 20)]
        pairs: usize,
    },
    /// Real-line representation with `S = e^{γx}`.
    Position {
        #[arg(long, default_value_t = 0.5)]
        q: f64,
        #[arg(long, default_value_t = 0.5)]
        gamma: f64,
        #[arg(long, default_value_t = 6)]
        n_max: usize,
    },
    /// Run every task of a JSON config.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run the acceptance suite.
    Selftest {
        /// Run only these criteria (1-12).
        #[arg(long, value_delimiter = ',')]
        only: Vec<usize>,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FamilyKind {
    Identity,
    RankOne,
}

#[derive(Debug, Args)]
pub struct FockArgs {
    #[arg(long, default_value_t = 0.5)]
    pub q: f64,
    /// Truncation dimension.
    #[arg(long = "k", default_value_t = 64)]
    pub k: usize,
    #[arg(long, value_enum, default_value_t = FamilyKind::RankOne)]
    pub family: FamilyKind,
    /// Deformation strength `re,im` of the standard split-support pair.
    #[arg(long, value_delimiter = ',', default_values_t = [0.0, 1.0], allow_negative_numbers = true)]
    pub alpha: Vec<f64>,
}

impl FockArgs {
    fn config(&self, task: TaskConfig) -> Result<ExperimentConfig, CliError> {
        let [re, im] = self.alpha[..] else {
            return Err(CliError::Config(format!("alpha: expected re,im, got {} values", self.alpha.len())));
        };
        let family = match self.family {
            FamilyKind::Identity => FamilyConfig::Identity,
            FamilyKind::RankOne => FamilyConfig::RankOne { alpha_def: [re, im], u: None, v: None },
        };
        Ok(base_config(self.q, self.k, family, task))
    }
}

fn base_config(q: f64, k: usize, family: FamilyConfig, task: TaskConfig) -> ExperimentConfig {
    ExperimentConfig { q, k, family, tasks: vec![TaskEntry::Detailed(task)], tolerances: Default::default(), seed: 0 }
}

pub fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

/// Runs a parsed command; `Ok(false)` signals a failed check.
pub fn execute(cli: &Cli) -> Result<bool, CliError> {
    let cfg = match &cli.command {
        Command::Beta { q, n_max } => return print_beta(*q, *n_max),
        Command::Selftest { only } => return Ok(selftest(only)),
        Command::Run { config } => ExperimentConfig::from_path(config)?,
        Command::Mutator(a) => a.config(TaskConfig::Mutator)?,
        Command::Family(a) => a.config(TaskConfig::Family)?,
        Command::Theta(a) => a.config(TaskConfig::Theta)?,
        Command::Bicoherent { fock, radius_fraction, n_r, n_theta } => fock.config(TaskConfig::Bicoherent {
            z_grid: ZGrid { radius_fraction: *radius_fraction, n_r: *n_r, n_theta: *n_theta, r_max: None },
        })?,
        Command::Resolution { fock, k_mom, n_theta, pairs } => fock.config(TaskConfig::Resolution {
            k_mom: *k_mom,
            n_theta: *n_theta,
            pairs: *pairs,
            support: (*k_mom).min(6),
        })?,
        Command::Position { q, gamma, n_max } => {
            base_config(*q, 64, FamilyConfig::Position { gamma: *gamma }, TaskConfig::Position { n_max: *n_max })
        }
    };
    let opts = RunOptions { out: cli.out.clone(), seed: cli.seed, tolerance_scale: cli.tolerance_scale };
    let summary = run(&cfg, &opts)?;
    print_summary(&summary);
    Ok(summary.pass)
}

fn print_beta(q: f64, n_max: usize) -> Result<bool, CliError> {
    let q = QParam::new(q).map_err(|e| CliError::Config(format!("q: {e}")))?;
    let betas = BetaSequence::new(q, n_max);
    println!("n,beta_sq,beta,beta_factorial");
    for n in 0..n_max as i64 {
        println!("{n},{:e},{:e},{:e}", betas.beta_sq(n), betas.beta(n), betas.factorial(n));
    }
    Ok(true)
}

fn print_summary(summary: &Summary) {
    for (task, rep) in &summary.tasks {
        println!("[{}] {task}", if rep.pass { "pass" } else { "FAIL" });
        for (name, m) in &rep.metrics {
            let tol = m.tolerance.map(|t| format!(" (tol {t:e})")).unwrap_or_default();
            println!("    {name:<22} {:e}{tol}", m.value);
        }
        if let Some(e) = &rep.error {
            println!("    error: {e}");
        }
    }
    for f in summary.failures() {
        eprintln!("failed: {f}");
    }
    println!("overall: {}", if summary.pass { "pass" } else { "FAIL" });
}

fn selftest(only: &[usize]) -> bool {
    let reports: Vec<_> = if only.is_empty() {
        crate::acceptance::all()
    } else {
        only.iter().map(|&id| crate::acceptance::run_criterion(id)).collect()
    };
    let mut pass = true;
    for r in &reports {
        println!("{}", r.render());
        pass &= r.pass();
    }
    pass
}
