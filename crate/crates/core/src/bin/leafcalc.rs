use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use leafcalc::report::Report;
use leafcalc::scenario::{self, ScenarioConfig};
use leafcalc::{Error, Result};

/// Longitudinal pseudodifferential calculus on singular foliations.
#[derive(Parser)]
#[command(name = "leafcalc", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Involutivity and identity bi-submersion checks.
    CheckFoliation(RunArgs),
    /// Fiber, leaf and cotangent dimensions.
    Fibers(RunArgs),
    /// Foliation Laplacian: symmetry, positivity, spectra.
    Laplacian(RunArgs),
    /// Parametrix residual orders and the idempotent identity.
    Parametrix(RunArgs),
    /// Square-root iteration.
    Sqrt(RunArgs),
    /// Boundedness, decay and recovery diagnostics.
    Scan(RunArgs),
    /// Every stage of the scenario.
    Report(RunArgs),
    /// List the bundled scenarios.
    Scenarios,
}

#[derive(Args)]
struct RunArgs {
    /// Scenario file.
    #[arg(long, value_name = "PATH", conflicts_with = "scenario", required_unless_present = "scenario")]
    config: Option<PathBuf>,
    /// Bundled scenario name.
    #[arg(long, value_name = "NAME")]
    scenario: Option<String>,
    /// Directory for the report and plot data.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Render the report as JSON.
    #[arg(long)]
    json: bool,
    /// Seed for randomized sampling.
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
    /// Grid size used by every stage.
    #[arg(long, value_name = "G")]
    grid: Option<usize>,
}

fn load(args: &RunArgs) -> Result<ScenarioConfig> {
    let mut config = match (&args.config, &args.scenario) {
        (Some(path), _) => ScenarioConfig::from_file(path)?,
        (None, Some(name)) => scenario::bundled(name)?,
        (None, None) => return Err(Error::Config("pass --config or --scenario".into())),
    };
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    config.grid_override = args.grid;
    Ok(config)
}

fn write(dir: &Path, name: &str, text: &str) -> Result<()> {
    std::fs::write(dir.join(name), text)?;
    Ok(())
}

fn emit(config: &ScenarioConfig, report: &Report, args: &RunArgs) -> Result<()> {
    let rendered = if args.json { report.to_json() } else { report.to_text() };
    match &args.out {
        None => print!("{rendered}"),
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            let default = if args.json { "report.json" } else { "report.txt" };
            let report_name = config.output.report.as_deref().unwrap_or(default);
            let csv_name = config.output.csv.as_deref().unwrap_or("plot.csv");
            write(dir, report_name, &rendered)?;
            write(dir, csv_name, &report.to_csv()?)?;
            let good = report.checks.iter().filter(|c| c.passed).count();
            println!(
                "{}: {good}/{} checks passed; wrote {}",
                report.scenario,
                report.checks.len(),
                dir.join(report_name).display()
            );
        }
    }
    Ok(())
}

fn execute(name: &str, args: &RunArgs) -> Result<bool> {
    let config = load(args)?;
    let report = scenario::run_command(&config, name)?;
    emit(&config, &report, args)?;
    Ok(report.passed())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (name, args) = match &cli.command {
        Command::CheckFoliation(a) => ("check-foliation", a),
        Command::Fibers(a) => ("fibers", a),
        Command::Laplacian(a) => ("laplacian", a),
        Command::Parametrix(a) => ("parametrix", a),
        Command::Sqrt(a) => ("sqrt", a),
        Command::Scan(a) => ("scan", a),
        Command::Report(a) => ("report", a),
        Command::Scenarios => {
            for (name, text) in scenario::BUNDLED {
                let description = ScenarioConfig::parse(text).ok().and_then(|c| c.description).unwrap_or_default();
                println!("{name:<18} {description}");
            }
            return ExitCode::SUCCESS;
        }
    };
    match execute(name, args) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("leafcalc: {e}");
            ExitCode::from(2)
        }
    }
}
