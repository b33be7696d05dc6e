//! `photon-detect` command-line front end.
//!
//! Successful commands print a JSON result on stdout and exit 0. Failures
//! print `{"error": {"kind": ..., "message": ...}}` on stderr and exit 1
//! (2 for command-line usage errors).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};
use photon_detect::harness::config::load_experiment;
use photon_detect::harness::pattern::{write_pattern_pgm, PatternRequest};
use photon_detect::harness::{
    export_dataset, run_multi_location, run_sweep, score_predictions, DatasetConfig, HarnessError, MultiLocationConfig,
};
use serde_json::{json, Value};

#[derive(Parser)]
#[command(name = "photon-detect", version, about = "Photon-limited pattern detection benchmark")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Contrast sweep for one stimulus; writes curves, summary and run records.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Sensitivity versus number of candidate signal locations.
    Multiloc {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a train/test dataset of raw photon-count images.
    ExportDataset {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a predictions file (one 0/1 label per line) against a dataset.
    Score {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        predictions: PathBuf,
    },
    /// Render a stimulus pattern to a PGM image.
    Pattern {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cmd: Command) -> Result<Value, HarnessError> {
    match cmd {
        Command::Sweep { config, out } => {
            let cfg = load_experiment(&config)?;
            let report = run_sweep(&cfg)?;
            report.write(&out)?;
            Ok(json!({
                "command": "sweep",
                "out": out,
                "contrasts": report.run.contrasts.len(),
                "detectors": report.summary,
            }))
        }
        Command::Multiloc { config, out } => {
            let cfg = MultiLocationConfig::load(&config)?;
            let report = run_multi_location(&cfg)?;
            report.write(&out)?;
            Ok(json!({ "command": "multiloc", "out": out, "ratios": report.ratios }))
        }
        Command::ExportDataset { config, out } => {
            let cfg = DatasetConfig::load(&config)?;
            let manifest = export_dataset(&cfg, &out)?;
            Ok(json!({
                "command": "export-dataset",
                "out": out,
                "train": manifest.splits.train.sample_count,
                "test": manifest.splits.test.sample_count,
                "analyticDprime": manifest.analytic_dprime,
            }))
        }
        Command::Score { manifest, predictions } => {
            let report = score_predictions(&manifest, &predictions)?;
            Ok(json!({ "command": "score", "result": report }))
        }
        Command::Pattern { spec, out } => {
            let req = PatternRequest::load(&spec)?;
            let p = write_pattern_pgm(&req, &out)?;
            Ok(json!({ "command": "pattern", "out": out, "width": p.width(), "height": p.height(), "std": p.std() }))
        }
    }
}

fn fail(kind: &str, message: String, code: u8) -> ExitCode {
    eprintln!("{}", json!({ "error": { "kind": kind, "message": message } }));
    ExitCode::from(code)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => return fail("usage", e.to_string().trim().to_string(), 2),
    };
    match run(cli.command) {
        Ok(v) => {
            println!("{}", serde_json::to_string_pretty(&v).expect("json value"));
            ExitCode::SUCCESS
        }
        Err(e) => fail(e.kind(), e.to_string(), 1),
    }
}
