//! Batch experiment runner for the `riskquant` toolkit.
//!
//! `riskquant run <config.toml>` executes one experiment and writes
//! `metrics.jsonl`, `summary.csv`, `timings.jsonl`, `config.resolved.toml`,
//! `models/run_<r>/*.json`, and `plotdata/*.csv` under the config's `output_dir`.

pub mod config;
pub mod output;
pub mod pipeline;

use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use riskquant::trainers::{EsModel, VarModel};
use serde::Deserialize;

use crate::config::{ConfigError, ExperimentConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "riskquant",
    about = "Neural VaR/ES experiments",
    disable_version_flag = true
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the experiment described by a TOML config.
    Run { config: PathBuf },
    /// Check a config without running it.
    Validate { config: PathBuf },
    /// Re-emit a saved model file.
    ExportModel {
        model: PathBuf,
        #[arg(long, value_enum, default_value_t = ExportFormat::Json)]
        format: ExportFormat,
        /// Write here instead of standard output.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Print the version.
    Version,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ExportFormat {
    Json,
}

// parsed only to check the file's shape
#[allow(dead_code)]
#[derive(Deserialize)]
struct StepModel {
    k: usize,
    t: f64,
    model: VarModel,
}

#[allow(dead_code)]
#[derive(Deserialize)]
#[serde(tag = "kind", content = "model", rename_all = "snake_case")]
enum ModelFile {
    Var(VarModel),
    Es(EsModel),
    VarSteps(Vec<StepModel>),
}

fn load_config(path: &std::path::Path, err: &mut dyn Write) -> Result<ExperimentConfig, i32> {
    match ExperimentConfig::load(path).and_then(ExperimentConfig::resolve) {
        Ok(c) => Ok(c),
        Err(e @ ConfigError::Read { .. }) => {
            let _ = writeln!(err, "error: {e}");
            Err(EXIT_USAGE)
        }
        Err(e) => {
            let _ = writeln!(err, "error: {}: {e}", path.display());
            Err(EXIT_USAGE)
        }
    }
}

/// Caps the global worker pool from `RISKQUANT_THREADS` when set.
fn configure_threads(err: &mut dyn Write) -> Result<(), i32> {
    let Ok(v) = std::env::var("RISKQUANT_THREADS") else {
        return Ok(());
    };
    match v.trim().parse::<usize>() {
        Ok(n) if n > 0 => {
            // a pool built earlier in the process already fixes the count
            let _ = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global();
            Ok(())
        }
        _ => {
            let _ = writeln!(
                err,
                "error: RISKQUANT_THREADS must be a positive integer, got {v:?}"
            );
            Err(EXIT_USAGE)
        }
    }
}

fn export_model(
    path: &std::path::Path,
    output: Option<&std::path::Path>,
    out: &mut dyn Write,
) -> Result<(), String> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| format!("{}: not JSON: {e}", path.display()))?;
    serde_json::from_value::<ModelFile>(value.clone())
        .map_err(|e| format!("{}: not a riskquant model: {e}", path.display()))?;
    let pretty = serde_json::to_string_pretty(&value).expect("value serializes");
    match output {
        Some(p) => std::fs::write(p, pretty + "\n")
            .map_err(|e| format!("cannot write {}: {e}", p.display())),
        None => writeln!(out, "{pretty}").map_err(|e| e.to_string()),
    }
}

/// Parses `args` (program name first) and executes; returns the exit code.
pub fn run_cli<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() {
                write!(err, "{text}")
            } else {
                write!(out, "{text}")
            };
            return code;
        }
    };
    match cli.command {
        Command::Version => {
            let _ = writeln!(out, "riskquant {}", env!("CARGO_PKG_VERSION"));
            EXIT_OK
        }
        Command::Validate { config } => match load_config(&config, err) {
            Ok(_) => {
                let _ = writeln!(out, "{}: ok", config.display());
                EXIT_OK
            }
            Err(code) => code,
        },
        Command::Run { config } => {
            let cfg = match load_config(&config, err) {
                Ok(c) => c,
                Err(code) => return code,
            };
            if let Err(code) = configure_threads(err) {
                return code;
            }
            match pipeline::run_experiment(&cfg) {
                Ok(o) if o.failed_checks.is_empty() => {
                    let _ = writeln!(
                        out,
                        "wrote {} records to {}",
                        o.records,
                        cfg.output_dir.display()
                    );
                    EXIT_OK
                }
                Ok(o) => {
                    let _ = writeln!(
                        err,
                        "error: stage elicit_check: {} checks failed",
                        o.failed_checks.len()
                    );
                    for name in &o.failed_checks {
                        let _ = writeln!(err, "  {name}");
                    }
                    EXIT_RUNTIME
                }
                Err(e) => {
                    let _ = writeln!(err, "error: {e}");
                    EXIT_RUNTIME
                }
            }
        }
        Command::ExportModel {
            model,
            format,
            output,
        } => {
            let ExportFormat::Json = format;
            match export_model(&model, output.as_deref(), out) {
                Ok(()) => EXIT_OK,
                Err(e) => {
                    let _ = writeln!(err, "error: {e}");
                    EXIT_RUNTIME
                }
            }
        }
    }
}
