//! Command-line front end for the closed-loop contact simulator.

use clap::{Parser, ValueEnum};
use contact_core::mission::{
    emit_outputs, run_scenario, PlantVariant, ScenarioConfig, ScenarioError,
};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Debug, Clone, Copy, ValueEnum)]
enum PlantArg {
    Kinematic,
    Dynamic,
}

#[derive(Debug, Parser)]
#[command(
    name = "contact-sim",
    version,
    about = "Simulate a funnel-guarded aerial contact approach"
)]
struct Args {
    /// Scenario TOML file.
    #[arg(long)]
    scenario: PathBuf,
    /// Output directory for run.csv, summary.json and plots.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Override the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the scenario duration, s.
    #[arg(long)]
    duration: Option<f64>,
    #[arg(long, value_enum)]
    plant: Option<PlantArg>,
    /// Suppress the summary on stdout.
    #[arg(long)]
    quiet: bool,
}

fn run(args: &Args) -> Result<bool, ScenarioError> {
    let mut config = ScenarioConfig::load(&args.scenario)?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(duration) = args.duration {
        config.duration_s = duration;
    }
    if let Some(plant) = args.plant {
        config.plant_variant = match plant {
            PlantArg::Kinematic => PlantVariant::Kinematic,
            PlantArg::Dynamic => PlantVariant::Dynamic,
        };
    }
    let report = match run_scenario(&config) {
        Ok(report) => report,
        Err(ScenarioError::Instability { source, partial }) => {
            // keep what was logged before the blow-up
            if !partial.series.is_empty() {
                emit_outputs(&partial, &args.out)?;
            }
            return Err(ScenarioError::Plant(source));
        }
        Err(e) => return Err(e),
    };
    emit_outputs(&report, &args.out)?;
    if !args.quiet {
        let json = serde_json::to_string_pretty(&report.summary).unwrap_or_default();
        println!("{json}");
    }
    Ok(report.summary.contact)
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(&args) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("contact-sim: {e}");
            ExitCode::from(1)
        }
    }
}
