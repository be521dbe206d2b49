//! `agf-sim`: run Monte-Carlo BLER campaigns from scenario files, list
//! available scenarios, or self-check the numerical building blocks.

mod verify;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use agf_core::results::{emit_results, OutputFormat, ScenarioRun};
use agf_core::runner::{run_point, TrialContext};
use agf_core::scenario::{load_dir, Scenario};
use agf_core::Error;

#[derive(Parser)]
#[command(
    name = "agf-sim",
    version,
    about = "Link-level simulator for autonomous grant-free multiple access"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario campaign and emit the BLER curve.
    Run {
        /// Scenario TOML file.
        #[arg(long)]
        scenario: PathBuf,
        /// Override the scenario's SNR grid (comma separated dB values).
        #[arg(long = "snr-db", value_delimiter = ',', num_args = 1..)]
        snr_db: Vec<f64>,
        /// Override the scenario's trials per point.
        #[arg(long)]
        trials: Option<usize>,
        /// Override the scenario's master seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Write results here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = FormatArg::Csv)]
        format: FormatArg,
    },
    /// List the scenarios in a directory.
    ListScenarios {
        #[arg(long, default_value = "scenarios")]
        dir: PathBuf,
    },
    /// Self-check the receiver's numerical building blocks.
    Verify,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Io(_) => ExitCode::from(3),
                _ => ExitCode::from(2),
            }
        }
    }
}

fn dispatch(cli: Cli) -> agf_core::Result<ExitCode> {
    match cli.command {
        Command::Run { scenario, snr_db, trials, seed, out, format } => {
            let mut s = Scenario::from_path(&scenario)?;
            if !snr_db.is_empty() {
                s.snr_db = snr_db;
            }
            if let Some(t) = trials {
                s.trials = t;
            }
            if let Some(sd) = seed {
                s.seed = sd;
            }
            s.validate()?;
            let run = run_with_progress(&s)?;
            let format = match format {
                FormatArg::Csv => OutputFormat::Csv,
                FormatArg::Json => OutputFormat::Json,
            };
            match out {
                Some(path) => {
                    let mut file = std::fs::File::create(&path)?;
                    emit_results(&run, format, &mut file)?;
                    eprintln!("wrote {}", path.display());
                }
                None => {
                    let mut stdout = std::io::stdout().lock();
                    emit_results(&run, format, &mut stdout)?;
                }
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::ListScenarios { dir } => {
            let all = load_dir(&dir)?;
            if all.is_empty() {
                eprintln!("no scenarios in {}", dir.display());
                return Ok(ExitCode::SUCCESS);
            }
            println!(
                "{:<24} {:<14} {:>4} {:>4} {:>7} {:>7} {:>9}",
                "name", "receiver", "ues", "ant", "points", "trials", "overload"
            );
            for s in &all {
                println!(
                    "{:<24} {:<14} {:>4} {:>4} {:>7} {:>7} {:>8.0}%",
                    s.name,
                    format!("{:?}", s.receiver).to_lowercase(),
                    s.num_ues,
                    s.num_antennas,
                    s.snr_db.len(),
                    s.trials,
                    s.overloading_percent()
                );
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Verify => {
            if verify::run_all() {
                Ok(ExitCode::SUCCESS)
            } else {
                Ok(ExitCode::from(1))
            }
        }
    }
}

/// Run every point of a scenario, reporting progress on stderr so stdout
/// stays clean for the results themselves.
fn run_with_progress(s: &Scenario) -> agf_core::Result<ScenarioRun> {
    let ctx = TrialContext::new(s)?;
    let mut points = Vec::with_capacity(s.snr_db.len());
    for idx in 0..s.snr_db.len() {
        let point = run_point(&ctx, idx)?;
        eprintln!(
            "[{}/{}] snr {} dB: bler {:.3e} ({}/{} blocks)",
            idx + 1,
            s.snr_db.len(),
            point.snr_db,
            point.bler,
            point.block_errors,
            point.blocks_sent
        );
        points.push(point);
    }
    Ok(ScenarioRun { scenario: s.name.clone(), points })
}
