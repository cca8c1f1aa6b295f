//! `affine-interior`: dimension certificates, symbolic measures, sumset
//! splits and interior evidence for affine iterated function systems.
//!
//! Exit codes: 0 = certified/pass, 1 = error or failed verification,
//! 2 = inconclusive, 64 = usage.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod output;
mod parallel;
mod report;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "affine-interior",
    version,
    about = "Dimension certificates, measures, sumset splits and interior evidence for affine IFS",
    disable_help_subcommand = true
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Args)]
pub struct Flags {
    /// System description (JSON file).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// RNG seed; overrides the config's seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Enumeration depth / block-length cap (command-specific meaning).
    #[arg(long)]
    pub depth: Option<usize>,
    /// Node, sample or point budget (command-specific meaning).
    #[arg(long)]
    pub budget: Option<u64>,
    /// Grid resolutions (cells per axis) or energy cutoffs, comma-separated.
    #[arg(long, value_delimiter = ',')]
    pub resolution: Option<Vec<usize>>,
    /// Exponent: t for measures/splits, s for energies.
    #[arg(long)]
    pub t: Option<f64>,
    /// Directory for artifacts (reports, rasters, CSV).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Verification suite: gradient, decay, singular, slice, stationary, all.
    #[arg(long)]
    pub suite: Option<String>,
    /// Artifact format: json, csv or pgm (command-specific default).
    #[arg(long)]
    pub format: Option<String>,
    /// Randomized trial count for verify/split.
    #[arg(long)]
    pub trials: Option<usize>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Evaluate all certification gates and criteria for a system.
    Check(Flags),
    /// Certify that the critical exponent exceeds the ambient dimension.
    Tvalue(Flags),
    /// Bracket the affinity dimension from depth sums.
    Affdim(Flags),
    /// Build the weighted block measure and verify its cylinder bound.
    Measure(Flags),
    /// Render an outer cylinder cover of the attractor.
    Render(Flags),
    /// Sample occupancy grids and report interior evidence.
    Interior(Flags),
    /// Find a certified block class, build the sumset split, verify it.
    Split(Flags),
    /// Estimate truncated Sobolev energies of the sampled pushforward.
    Sobolev(Flags),
    /// Run the numerical verification suites for the supporting inequalities.
    Verify(Flags),
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let kind = e.kind();
            if kind == ErrorKind::DisplayHelp || kind == ErrorKind::DisplayVersion {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            eprint!("{e}");
            return ExitCode::from(64);
        }
    };
    match dispatch(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn dispatch(cli: Cli) -> anyhow::Result<u8> {
    let (name, flags): (&str, &Flags) = match &cli.cmd {
        Cmd::Check(f) => ("check", f),
        Cmd::Tvalue(f) => ("tvalue", f),
        Cmd::Affdim(f) => ("affdim", f),
        Cmd::Measure(f) => ("measure", f),
        Cmd::Render(f) => ("render", f),
        Cmd::Interior(f) => ("interior", f),
        Cmd::Split(f) => ("split", f),
        Cmd::Sobolev(f) => ("sobolev", f),
        Cmd::Verify(f) => ("verify", f),
    };
    commands::out_dir_exists_or_create(flags)?;

    let needs_config = name != "verify";
    let system = match &flags.config {
        Some(path) => Some(config::parse_config_file(path, flags.seed)?),
        None => None,
    };
    if needs_config && system.is_none() {
        eprintln!("error: --config is required for `{name}`");
        eprintln!("usage: affine-interior {name} --config <PATH> [flags]");
        std::process::exit(64);
    }

    let outcome = match (&cli.cmd, &system) {
        (Cmd::Check(f), Some(sys)) => commands::run_check(sys, f)?,
        (Cmd::Tvalue(f), Some(sys)) => commands::run_tvalue(sys, f)?,
        (Cmd::Affdim(f), Some(sys)) => commands::run_affdim(sys, f)?,
        (Cmd::Measure(f), Some(sys)) => commands::run_measure(sys, f)?,
        (Cmd::Render(f), Some(sys)) => commands::run_render(sys, f)?,
        (Cmd::Interior(f), Some(sys)) => commands::run_interior(sys, f)?,
        (Cmd::Split(f), Some(sys)) => commands::run_split(sys, f)?,
        (Cmd::Sobolev(f), Some(sys)) => commands::run_sobolev(sys, f)?,
        (Cmd::Verify(f), sys) => commands::run_verify(sys.as_ref(), f)?,
        _ => unreachable!("config requirement enforced above"),
    };

    let hash = system.as_ref().map(|s| report::config_hash(&s.canonical));
    let seed = flags.seed.or_else(|| system.as_ref().map(|s| s.seed));
    let mut envelope = report::envelope(name, hash.as_deref(), seed, outcome.body);
    if let Some(labels) = system.as_ref().and_then(|s| s.labels.clone()) {
        envelope
            .as_object_mut()
            .expect("envelope is an object")
            .insert("labels".into(), labels);
    }
    println!("{}", report::to_json_string(&envelope));
    commands::maybe_write_report(flags, &format!("{name}.json"), &envelope)?;
    Ok(outcome.exit)
}
