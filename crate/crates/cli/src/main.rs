use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;
mod config;
mod output;

use config::{Overrides, RunConfig};

/// Decomposition checks, norm studies and Monte Carlo demos for dyadic
/// shifts and their commutators.
///
/// Exit status: 0 when every assertion passes, 1 on an assertion failure
/// (the replay seed is printed), 2 on a usage or configuration error.
#[derive(Parser, Debug)]
#[command(name = "dyadic-lab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Check the commutator decomposition identities against the direct commutator.
    VerifyDecomp(Overrides),
    /// Maximal norm ratios of paraproducts and square functions.
    NormStudy(Overrides),
    /// John-Nirenberg and Fefferman-Stein ratios.
    JnCheck(Overrides),
    /// Average a fixed shift pattern over random grids.
    McDemo(Overrides),
    /// Commutator norms against the geometric weight schedule.
    BoundStudy(Overrides),
    /// Orthonormality, Parseval, roundtrip and adjoint checks.
    Selftest(Overrides),
}

impl Command {
    fn split(&self) -> (&'static str, &Overrides) {
        match self {
            Command::VerifyDecomp(o) => ("verify-decomp", o),
            Command::NormStudy(o) => ("norm-study", o),
            Command::JnCheck(o) => ("jn-check", o),
            Command::McDemo(o) => ("mc-demo", o),
            Command::BoundStudy(o) => ("bound-study", o),
            Command::Selftest(o) => ("selftest", o),
        }
    }
}

const USAGE: u8 = 2;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (name, overrides) = cli.command.split();
    let cfg = match RunConfig::resolve(name, overrides) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("dyadic-lab: invalid configuration: {e}");
            return ExitCode::from(USAGE);
        }
    };
    if let Some(t) = cfg.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("dyadic-lab: thread pool: {e}");
            return ExitCode::from(USAGE);
        }
    }
    let outcome = match commands::run(&cfg) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("dyadic-lab: {name}: {e:#}");
            return ExitCode::from(USAGE);
        }
    };
    for line in &outcome.summary {
        eprintln!("{line}");
    }
    let written = output::render(&cfg, &outcome).and_then(|bytes| output::write(&cfg, &bytes));
    match written {
        Ok(Some(path)) => eprintln!("report written to {}", path.display()),
        Ok(None) => {}
        Err(e) => {
            eprintln!("dyadic-lab: {e:#}");
            return ExitCode::from(USAGE);
        }
    }
    if outcome.failures.is_empty() {
        eprintln!("{name}: PASS");
        ExitCode::SUCCESS
    } else {
        for f in &outcome.failures {
            eprintln!("FAIL {}: {} (replay seed {})", f.case, f.detail, f.replay_seed);
        }
        eprintln!("{name}: FAIL");
        ExitCode::from(1)
    }
}
