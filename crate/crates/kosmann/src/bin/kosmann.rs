//! Command-line front end: run a check suite against a scenario file.

use std::process::ExitCode;

use clap::Parser;

use kosmann::cli::{load_scenario, render_report, run_checks, RunOptions, SUITES};
use kosmann::lie::LiftVariant;

#[derive(Parser)]
#[command(name = "kosmann", about = "Residual checks for metric Lie derivatives of tensor and spinor fields")]
struct Args {
    /// Check suite to run (validate, lie, kosmann, spin, theorem81,
    /// commutator, oracle or all).
    suite: String,
    /// Path to a scenario JSON file.
    #[arg(long)]
    scenario: String,
    /// Lift variant: `kosmann` (metric-compatible skew lift) or
    /// `natural` (plain frame transport).
    #[arg(long, default_value = "kosmann")]
    variant: String,
    /// Override the number of sample points from the scenario plan.
    #[arg(long)]
    points: Option<usize>,
    /// Override the sampler seed from the scenario plan.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the identity tolerance.
    #[arg(long)]
    tol_identity: Option<f64>,
    /// Override the flow-oracle tolerance.
    #[arg(long)]
    tol_oracle: Option<f64>,
    /// Emit the report as JSON instead of plain text.
    #[arg(long)]
    json: bool,
}

fn run(args: &Args) -> kosmann::Result<bool> {
    if !SUITES.contains(&args.suite.as_str()) {
        return Err(kosmann::Error::UnknownSuite(args.suite.clone()));
    }
    let variant = LiftVariant::parse(&args.variant)?;
    let scenario = load_scenario(&args.scenario)?;
    let opts = RunOptions {
        variant,
        points: args.points,
        seed: args.seed,
        tol_identity: args.tol_identity,
        tol_oracle: args.tol_oracle,
    };
    let reports = run_checks(&scenario, &args.suite, &opts)?;
    if args.json {
        println!("{}", serde_json::to_string_pretty(&reports)?);
    } else {
        print!("{}", render_report(&scenario, &args.suite, &opts, &reports));
    }
    Ok(reports.iter().all(|r| r.pass))
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(&args) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
