use std::io::{self, BufReader};
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::Context;
use clap::{Parser, Subcommand};

use augloop_core::bridge::{serve, DatasetArg};
use augloop_core::config::{execute, ConfigError, ExecError, RunConfig};
use augloop_core::orchestrator::{replay, ReplayError};
use augloop_core::report::{build_report, render_csv, render_table};
use augloop_core::trainer::{
    generate_synthetic_dataset, load_dataset, ReferenceTrainer, ReferenceTrainerConfig, SyntheticSpec,
};

const EXIT_OK: u8 = 0;
const EXIT_VALIDATION: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

#[derive(Parser)]
#[command(name = "augloop", version, about = "Augmentation policy search driven by a language model")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Execute one run from a JSON config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory, overrides the config.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Run seed, overrides the config.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Build a comparison table from finished ledgers.
    Report {
        ledgers: Vec<PathBuf>,
        /// Directory for report.csv and report.txt.
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Re-execute a ledger and list any divergence.
    Replay { ledger: PathBuf },
    /// Built-in bridge adapter around the reference trainer.
    #[command(hide = true)]
    ServeReference {
        #[arg(long)]
        dataset: String,
        #[arg(long, default_value = "")]
        model: String,
    },
}

fn cmd_run(config: PathBuf, out: Option<PathBuf>, seed: Option<u64>) -> u8 {
    let mut cfg = match RunConfig::load(&config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_VALIDATION;
        }
    };
    if let Some(out) = out {
        cfg.output_dir = out;
    }
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    match execute(&cfg) {
        Ok(a) => {
            let o = &a.outcome;
            println!(
                "{}: val_accuracy {:.4}, {} LLM queries, {} epochs",
                o.run_id, o.final_metrics.val_accuracy, o.cost.llm_queries, o.cost.total_epochs_trained
            );
            println!("ledger: {}", a.ledger_path.display());
            println!("report: {}", a.report_txt.display());
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_validation() || matches!(e, ExecError::Config(ConfigError::Invalid(_))) {
                EXIT_VALIDATION
            } else {
                EXIT_RUNTIME
            }
        }
    }
}

fn cmd_report(ledgers: Vec<PathBuf>, out: PathBuf) -> anyhow::Result<u8> {
    if ledgers.is_empty() {
        eprintln!("error: report needs at least one ledger");
        return Ok(EXIT_VALIDATION);
    }
    let rows = build_report(&ledgers);
    std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    let table = render_table(&rows);
    std::fs::write(out.join("report.csv"), render_csv(&rows))?;
    std::fs::write(out.join("report.txt"), &table)?;
    print!("{table}");
    for r in rows.iter().filter(|r| r.status.starts_with("invalid")) {
        eprintln!("warning: {}: {}", r.ledger.display(), r.status);
    }
    Ok(EXIT_OK)
}

fn cmd_replay(ledger: PathBuf) -> u8 {
    match replay(&ledger) {
        Ok(report) if report.is_clean() => {
            println!("{}: {} iterations, no divergence", report.run_id, report.iterations_checked);
            EXIT_OK
        }
        Ok(report) => {
            println!("{}: {} divergence(s)", report.run_id, report.divergences.len());
            for d in &report.divergences {
                println!("  {d}");
            }
            EXIT_RUNTIME
        }
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                ReplayError::Config(_) => EXIT_VALIDATION,
                e if e.is_version() => EXIT_VALIDATION,
                _ => EXIT_RUNTIME,
            }
        }
    }
}

fn cmd_serve(dataset: &str, model: &str) -> anyhow::Result<u8> {
    let dataset = match DatasetArg::parse(dataset).map_err(anyhow::Error::msg)? {
        DatasetArg::Directory(dir) => load_dataset(&dir)?,
        DatasetArg::Synthetic(seed) => generate_synthetic_dataset(&SyntheticSpec::default(), seed),
    };
    log::info!("serving reference trainer for model {model:?}");
    let mut trainer = ReferenceTrainer::new(Arc::new(dataset), ReferenceTrainerConfig::default());
    let code = serve(BufReader::new(io::stdin().lock()), io::stdout().lock(), &mut trainer);
    Ok(u8::try_from(code).unwrap_or(1))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .target(env_logger::Target::Stderr)
        .init();
    let cli = Cli::parse();
    let result = match cli.command {
        Cmd::Run { config, out, seed } => Ok(cmd_run(config, out, seed)),
        Cmd::Report { ledgers, out } => cmd_report(ledgers, out),
        Cmd::Replay { ledger } => Ok(cmd_replay(ledger)),
        Cmd::ServeReference { dataset, model } => cmd_serve(&dataset, &model),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_RUNTIME)
        }
    }
}
