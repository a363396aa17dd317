//! Command-line front end: run experiment configs, rebuild reports, and list
//! the available experiment kinds.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use apc_lab::bench::config::{ExperimentConfig, ExperimentKind};
use apc_lab::bench::report::emit_report;
use apc_lab::bench::runner::{read_manifest, run_experiment, RunOptions};

/// Imitation-learning lab: behavior cloning with feedback-sensitive
/// augmentation on analytically solvable control tasks.
#[derive(Parser)]
#[command(name = "apc-lab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a TOML config file.
    Run {
        /// Path to the experiment config.
        #[arg(long)]
        config: PathBuf,
        /// Output root. Defaults to $APC_LAB_OUT, then ./runs.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Only run arms whose id contains this substring.
        #[arg(long)]
        arms: Option<String>,
        /// Worker threads. Artifacts are byte-identical at any thread count.
        #[arg(long, default_value_t = 1)]
        threads: usize,
        /// Skip table/figure generation after the run.
        #[arg(long)]
        no_report: bool,
    },
    /// Rebuild tables and figures for a finished experiment directory.
    Report {
        /// Experiment directory (contains manifest.json).
        #[arg(long)]
        dir: PathBuf,
    },
    /// List the experiment kinds accepted as `kind = "..."` in configs.
    SweepList,
}

fn out_root(flag: Option<PathBuf>) -> PathBuf {
    flag.or_else(|| std::env::var_os("APC_LAB_OUT").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("runs"))
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn execute(cli: Cli) -> apc_lab::Result<ExitCode> {
    match cli.command {
        Command::Run {
            config,
            out,
            arms,
            threads,
            no_report,
        } => {
            let cfg = ExperimentConfig::load(&config)?;
            let mut opts = RunOptions::new(out_root(out));
            opts.arm_filter = arms;
            opts.threads = threads;
            let dir = run_experiment(&cfg, &opts)?;
            let manifest = read_manifest(&dir)?;
            let arm_records = manifest["arms"].as_array().cloned().unwrap_or_default();
            let mut failed = 0usize;
            for arm in &arm_records {
                let id = arm["id"].as_str().unwrap_or("?");
                if arm["status"] == "ok" {
                    println!("ok      {id}");
                } else {
                    failed += 1;
                    println!("FAILED  {id}: {}", arm["error"].as_str().unwrap_or(""));
                }
            }
            if let Some(sel) = manifest.get("selection").filter(|s| s.is_object()) {
                println!(
                    "selected {} by {} (validation mean {}, mean test score {})",
                    sel["group"].as_str().unwrap_or("?"),
                    sel["rule"].as_str().unwrap_or("?"),
                    sel["validation_mean"],
                    sel["test_score_mean"],
                );
            }
            if failed == 0 && !no_report {
                for file in emit_report(&dir)? {
                    println!("report  {}", file.display());
                }
            }
            println!("wrote {} arm(s) under {}", arm_records.len(), dir.display());
            if failed > 0 {
                eprintln!("{failed} arm(s) failed");
                return Ok(ExitCode::FAILURE);
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Report { dir } => {
            for file in emit_report(&dir)? {
                println!("{}", file.display());
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::SweepList => {
            for kind in ExperimentKind::ALL {
                println!("{:<18} {}", kind.as_str(), kind.describe());
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}
