//! `pxp`: command-line front end for constrained-chain Krylov and revival studies.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 configuration error,
//! 3 capacity error, 64 usage error.

mod commands;
mod config;
mod output;
mod reproduce;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use pxp_core::dynamics::TimeGrid;
use pxp_core::{Scheme, StateTag, TermName};

use commands::{CoefficientSource, ErrorsArgs, KrylovChoice, Observable, ObjectiveArg, OptimizeArgs};
use config::{ConfigError, RunConfig};
use output::Bundle;
use reproduce::Target;

const EXIT_RUNTIME: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_CAPACITY: u8 = 3;
const EXIT_USAGE: u8 = 64;

#[derive(Debug, Parser)]
#[command(name = "pxp", version, about = "Krylov, FSA and revival computations for the PXP chain")]
struct Cli {
    #[command(flatten)]
    run: RunArgs,
    #[command(subcommand)]
    command: Command,
}

/// Flags mirroring the JSON configuration; they override `--config`.
#[derive(Debug, Args)]
struct RunArgs {
    /// Number of sites.
    #[arg(long = "L", global = true)]
    sites: Option<usize>,
    /// Initial product state: vacuum, z2, z2prime or z3.
    #[arg(long, global = true)]
    initial: Option<StateTag>,
    /// Ladder scheme: z2, z3, vacuum or z3exact.
    #[arg(long, global = true)]
    scheme: Option<Scheme>,
    /// Term strength, e.g. `--term sigma3=0.31`; repeatable.
    #[arg(long = "term", value_name = "NAME=VALUE", global = true, value_parser = parse_term)]
    terms: Vec<(TermName, f64)>,
    #[arg(long, global = true)]
    dt: Option<f64>,
    #[arg(long = "t-max", global = true)]
    t_max: Option<f64>,
    /// Output file (directory for `reproduce`); standard output when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for parameter sweeps.
    #[arg(long, global = true, env = "PXP_THREADS")]
    threads: Option<usize>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Basis dimension and sector counts as JSON.
    Basis,
    /// Eigenvalues of the assembled Hamiltonian.
    Spectrum,
    /// Lanczos coefficients from the initial state.
    Lanczos {
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Forward-scattering coefficients and errors.
    Fsa,
    /// Return probability, energy and diagonal observables in time.
    Evolve,
    /// Spread complexity and leakage in Lanczos and/or FSA bases.
    Complexity {
        #[arg(long, value_enum, default_value_t = KrylovChoice::Both)]
        basis: KrylovChoice,
        /// Lanczos vectors kept (default 4(L+1)).
        #[arg(long)]
        steps: Option<usize>,
    },
    /// FSA error profiles over a strength grid and/or a list of sizes.
    Errors {
        /// Term whose strength is swept.
        #[arg(long)]
        vary: Option<TermName>,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        from: f64,
        #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
        to: f64,
        #[arg(long, default_value_t = 21)]
        points: usize,
        /// Comma-separated system sizes.
        #[arg(long, value_delimiter = ',')]
        sizes: Vec<usize>,
    },
    /// su(2)_q fit of the ladder coefficients as JSON.
    Qfit {
        #[arg(long, value_enum, default_value_t = CoefficientSource::Fsa)]
        source: CoefficientSource,
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Maximize an objective over free term strengths.
    Optimize {
        #[arg(long, value_enum)]
        objective: ObjectiveArg,
        /// Step index for neg-error-numeric.
        #[arg(long)]
        n: Option<usize>,
        /// Comma-separated free terms.
        #[arg(long, value_delimiter = ',', required = true)]
        free: Vec<TermName>,
        /// Comma-separated start point (default: configured strengths).
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        x0: Vec<f64>,
        #[arg(long, default_value_t = 0.05)]
        radius: f64,
        /// Grid scan `LO,HI,POINTS` followed by golden-section refinement.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        scan: Option<Vec<f64>>,
        #[arg(long, default_value_t = 400)]
        max_evaluations: usize,
        /// Trace CSV (default: next to `--out`).
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Cross-correlation of two observables.
    Xcorr {
        #[arg(long, value_enum, default_value_t = Observable::ReturnProbability)]
        a: Observable,
        #[arg(long, value_enum, default_value_t = Observable::NnnCorrelator)]
        b: Observable,
        #[arg(long)]
        max_lag: Option<usize>,
    },
    /// Bundled runs for a named comparison.
    Reproduce {
        #[arg(value_enum)]
        target: Target,
        /// Z2 perturbation strength (default 0.108).
        #[arg(long)]
        lambda: Option<f64>,
    },
}

fn parse_term(s: &str) -> Result<(TermName, f64), String> {
    let (name, value) = s.split_once('=').ok_or_else(|| format!("expected NAME=VALUE, got `{s}`"))?;
    let name: TermName = name.trim().parse().map_err(|e| format!("{e}"))?;
    let value: f64 = value.trim().parse().map_err(|e| format!("bad strength `{value}`: {e}"))?;
    Ok((name, value))
}

impl RunArgs {
    fn run_config(&self) -> Result<RunConfig> {
        let base = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        let time = match (self.dt, self.t_max, base.time) {
            (None, None, t) => t,
            (dt, t_max, t) => {
                let t = t.unwrap_or_default();
                Some(TimeGrid { dt: dt.unwrap_or(t.dt), t_max: t_max.unwrap_or(t.t_max) })
            }
        };
        let flags = RunConfig {
            sites: self.sites,
            initial: self.initial,
            scheme: self.scheme,
            terms: self.terms.iter().copied().collect(),
            time,
            threads: self.threads,
            seed: self.seed,
        };
        Ok(base.overlay(flags))
    }
}

fn execute(cli: Cli) -> Result<()> {
    let cfg = cli.run.run_config()?;
    if let Some(n) = cfg.threads {
        if n == 0 {
            return Err(ConfigError::Invalid("threads must be positive".into()).into());
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    let out = cli.run.out.as_deref();
    match cli.command {
        Command::Basis => commands::basis(&cfg.resolve(None)?, out),
        Command::Spectrum => commands::spectrum(&cfg.resolve(None)?, out),
        Command::Lanczos { steps } => commands::lanczos_cmd(&cfg.resolve(None)?, steps, out),
        Command::Fsa => commands::fsa_cmd(&cfg.resolve(None)?, out),
        Command::Evolve => commands::evolve(&cfg.resolve(None)?, out),
        Command::Complexity { basis, steps } => commands::complexity(&cfg.resolve(None)?, basis, steps, out),
        Command::Errors { vary, from, to, points, sizes } => {
            let default_sites = sizes.first().copied();
            let args = ErrorsArgs { vary, from, to, points, sizes: &sizes };
            commands::errors(&cfg.resolve(default_sites)?, args, out)
        }
        Command::Qfit { source, steps } => commands::qfit(&cfg.resolve(None)?, source, steps, out),
        Command::Optimize { objective, n, free, x0, radius, scan, max_evaluations, trace } => {
            let scan = match scan.as_deref() {
                None => None,
                Some([lo, hi, points]) if *points >= 1.0 && points.fract() == 0.0 => Some((*lo, *hi, *points as usize)),
                Some(_) => return Err(ConfigError::Invalid("--scan takes LO,HI,POINTS".into()).into()),
            };
            let args = OptimizeArgs { objective, n, free, x0, radius, scan, max_evaluations, trace };
            commands::optimize(&cfg, args, out)
        }
        Command::Xcorr { a, b, max_lag } => commands::xcorr(&cfg.resolve(None)?, a, b, max_lag, out),
        Command::Reproduce { target, lambda } => {
            let dir = cli.run.out.clone().unwrap_or_else(|| PathBuf::from(target.name()));
            let mut bundle = Bundle::new(dir)?;
            reproduce::run(target, &cfg, lambda, &mut bundle)?;
            for path in &bundle.written {
                println!("{}", path.display());
            }
            Ok(())
        }
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.downcast_ref::<ConfigError>().is_some() {
            return EXIT_CONFIG;
        }
        if let Some(e) = cause.downcast_ref::<pxp_core::Error>() {
            return match e {
                pxp_core::Error::Capacity { .. } => EXIT_CAPACITY,
                pxp_core::Error::Size(..)
                | pxp_core::Error::Configuration(_)
                | pxp_core::Error::UnsupportedSplit { .. }
                | pxp_core::Error::SchemeMismatch(_) => EXIT_CONFIG,
                _ => EXIT_RUNTIME,
            };
        }
    }
    EXIT_RUNTIME
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
