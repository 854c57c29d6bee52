use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mfglab::experiment::{emit_report, run_experiment, ExperimentConfig, ExperimentKind, ReportFormat};

#[derive(Parser)]
#[command(name = "mfglab", version, about = "Regularized mean-field game experiments on the torus")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Newton continuation along the configured schedule
    Solve(RunArgs),
    /// σ-sweep with estimates, rate fit and uniformity verdicts
    Sweep(RunArgs),
    /// Limits from several guesses and schedules, plus the weak check
    Uniqueness(RunArgs),
    MollifyAudit(RunArgs),
    MonotonicityAudit(RunArgs),
    ExponentCheck(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    /// Overrides the seed in the config
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated subset of csv, json, svg
    #[arg(long, default_value = "csv,json,svg", value_delimiter = ',')]
    format: Vec<ReportFormat>,
}

fn run(kind: ExperimentKind, args: RunArgs) -> mfglab::Result<bool> {
    let mut config = ExperimentConfig::load(&args.config)?;
    match config.kind {
        Some(k) if k != kind => {
            return Err(mfglab::Error::Config(format!(
                "config declares kind {} but the {} subcommand was used",
                k.name(),
                kind.name()
            )))
        }
        _ => config.kind = Some(kind),
    }
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    let record = run_experiment(&config)?;
    let written = emit_report(&record, &args.format, &args.out_dir)?;
    for v in &record.verdicts {
        let tag = if v.passed() { "PASS" } else { "FAIL" };
        println!("{tag} {}: {}", v.criterion, v.detail);
    }
    for note in &record.notes {
        println!("note: {note}");
    }
    for p in written {
        eprintln!("wrote {}", p.display());
    }
    Ok(record.all_passed())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (kind, args) = match cli.command {
        Command::Solve(a) => (ExperimentKind::Solve, a),
        Command::Sweep(a) => (ExperimentKind::Sweep, a),
        Command::Uniqueness(a) => (ExperimentKind::Uniqueness, a),
        Command::MollifyAudit(a) => (ExperimentKind::MollifyAudit, a),
        Command::MonotonicityAudit(a) => (ExperimentKind::MonotonicityAudit, a),
        Command::ExponentCheck(a) => (ExperimentKind::ExponentCheck, a),
    };
    match run(kind, args) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
