use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use hillmsa::cli::{self, ConfigError, ExportFormat, LoadedConfig, RunError, OUTPUT_DIR_ENV};
use hillmsa::verify::{run_verify, Suite};

/// Band functions and gap audits for Hill operators with rational frequencies.
#[derive(Parser)]
#[command(version)]
struct Args {
    /// Worker threads; defaults to the number of cores.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute E(k), gap edges and audits; writes band.csv, gaps.csv, report.json, run.log.
    Band { config: PathBuf },
    /// Run a property or oracle suite and print a JSON summary.
    Verify {
        config: PathBuf,
        #[arg(long, default_value = "all")]
        suite: Suite,
    },
    /// Rewrite a stored report.json as CSV tables or canonical JSON.
    Export {
        report: PathBuf,
        #[arg(long, default_value = "csv")]
        format: ExportFormat,
        /// Output directory; defaults to $HILLMSA_OUTPUT_DIR or the report's directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

const CHECK_FAILED: u8 = 1;
const CONFIG_ERROR: u8 = 2;

fn config_failure(e: &ConfigError) -> ExitCode {
    eprintln!("{}", serde_json::json!({ "error": "config", "message": e.to_string() }));
    ExitCode::from(CONFIG_ERROR)
}

fn run_failure(e: &RunError) -> ExitCode {
    match e {
        RunError::Config(c) => config_failure(c),
        other => {
            eprintln!("{}", serde_json::json!({ "error": "io", "message": other.to_string() }));
            ExitCode::from(CHECK_FAILED)
        }
    }
}

fn main() -> ExitCode {
    let args = Args::parse();
    if let Some(n) = args.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("cannot set thread count: {e}");
            return ExitCode::from(CONFIG_ERROR);
        }
    }
    match args.command {
        Command::Band { config } => match cli::run_band(&config) {
            Ok((report, files)) => {
                for f in &files {
                    println!("{}", f.display());
                }
                for a in &report.band.audits {
                    println!("{} {}", if a.passed { "pass" } else { "FAIL" }, a.name);
                }
                if report.passed {
                    ExitCode::SUCCESS
                } else {
                    ExitCode::from(CHECK_FAILED)
                }
            }
            Err(e) => run_failure(&e),
        },
        Command::Verify { config, suite } => {
            let loaded = match LoadedConfig::from_path(&config) {
                Ok(l) => l,
                Err(e) => return config_failure(&e),
            };
            let reports = run_verify(&loaded, suite);
            println!("{}", serde_json::to_string_pretty(&reports).expect("serializable"));
            if reports.iter().all(|r| r.passed) {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(CHECK_FAILED)
            }
        }
        Command::Export { report, format, out } => {
            let dir = out
                .or_else(|| std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from))
                .or_else(|| report.parent().map(PathBuf::from))
                .unwrap_or_default();
            match cli::export(&report, format, &dir) {
                Ok(files) => {
                    for f in files {
                        println!("{}", f.display());
                    }
                    ExitCode::SUCCESS
                }
                Err(e) => run_failure(&e),
            }
        }
    }
}
