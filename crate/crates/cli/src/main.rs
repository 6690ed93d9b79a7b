mod settings;
mod sweep;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use fracbayes::acceptance::{AcceptanceSuite, Outcome, CRITERIA};
use fracbayes::engine::{read_trace_file, run, TraceHeader};
use fracbayes::presets::preset_registry;
use rayon::prelude::*;

use settings::{replay_config, usage, Settings, Usage};

#[derive(Parser)]
#[command(name = "fracbayes", version, about = "Distributed fractional Bayesian learning with gradient descent")]
struct Cli {
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a preset or a custom configuration and write its traces.
    Run {
        #[command(flatten)]
        settings: Settings,
        /// Re-run the configuration stored in a trace header.
        #[arg(long, value_name = "HEADER", conflicts_with_all = ["preset", "config"])]
        replay: Option<PathBuf>,
    },
    /// Run many seeds in parallel and write aggregate.json.
    Sweep {
        #[command(flatten)]
        settings: Settings,
        /// N for seeds 0..N, or A..B.
        #[arg(long, default_value = "20")]
        seeds: String,
    },
    /// Run the acceptance criteria, or validate a trace file.
    Check {
        /// Single criterion, e.g. A3.
        #[arg(long, value_name = "ID")]
        only: Option<String>,
        /// Validate this trace CSV instead of running criteria.
        #[arg(long, value_name = "PATH")]
        trace: Option<PathBuf>,
        /// Write the outcomes as JSON.
        #[arg(long, value_name = "PATH")]
        report: Option<PathBuf>,
    },
    /// List the experiment presets.
    Presets,
}

fn cmd_run(settings: Settings, replay: Option<PathBuf>) -> Result<()> {
    let settings = settings.with_file()?;
    let configs = match &replay {
        Some(header) => vec![settings.apply(replay_config(header)?)?],
        None => settings.resolve(settings.seed.unwrap_or(0))?,
    };
    let out = settings.out_dir();
    let outputs: Vec<_> = configs.into_par_iter().map(run).collect();
    for output in outputs {
        let output = output?;
        let paths = output.write_files(&out)?;
        log::info!("wrote {}", paths.trace.display());
        if output.header.diagnostics.stepsize_violations > 0 {
            log::warn!(
                "{}: {} iterations used a stepsize above 1/(2L)",
                output.header.config.label,
                output.header.diagnostics.stepsize_violations
            );
        }
        println!("{}", output.summary());
    }
    Ok(())
}

fn cmd_sweep(settings: Settings, seeds: &str) -> Result<()> {
    let settings = settings.with_file()?;
    let seeds = sweep::parse_seeds(seeds)?;
    // Surface usage errors before any work starts.
    settings.resolve(seeds.start)?;
    let out = settings.out_dir();
    fs::create_dir_all(&out)?;
    let per_seed = sweep::sweep(seeds, &out, |s| settings.resolve(s));
    let agg = sweep::aggregate(settings.preset.clone(), per_seed);
    let path = out.join("aggregate.json");
    fs::write(&path, serde_json::to_string_pretty(&agg)?)?;
    println!("wrote {}", path.display());
    if !agg.failed_seeds.is_empty() {
        bail!("{} seed(s) failed: {:?}", agg.failed_seeds.len(), agg.failed_seeds);
    }
    Ok(())
}

fn check_trace(path: &Path) -> Result<()> {
    let trace = read_trace_file(path).with_context(|| format!("trace {}", path.display()))?;
    let header_path = path.with_extension("header.json");
    if header_path.exists() {
        let header = TraceHeader::read_json(&header_path)?;
        if header.columns != trace.columns {
            bail!("trace columns do not match {}", header_path.display());
        }
    }
    println!("trace OK: {} rows, {} columns", trace.rows.len(), trace.columns.len());
    Ok(())
}

fn cmd_check(only: Option<String>, trace: Option<PathBuf>, report: Option<PathBuf>) -> Result<()> {
    if let Some(path) = trace {
        return check_trace(&path);
    }
    let ids: Vec<&str> = match &only {
        Some(id) => {
            let id = CRITERIA
                .iter()
                .find(|(k, _)| k.eq_ignore_ascii_case(id))
                .ok_or_else(|| usage(format!("unknown criterion '{id}'")))?;
            vec![id.0]
        }
        None => CRITERIA.iter().map(|c| c.0).collect(),
    };
    let suite = AcceptanceSuite::new();
    let mut outcomes: Vec<Outcome> = Vec::new();
    for id in ids {
        let outcome = suite.run(id)?;
        println!("{outcome}");
        outcomes.push(outcome);
    }
    let passed = outcomes.iter().filter(|o| o.passed).count();
    println!("{passed}/{} criteria passed", outcomes.len());
    if let Some(path) = report {
        fs::write(&path, serde_json::to_string_pretty(&outcomes)?)?;
    }
    if passed < outcomes.len() {
        bail!("{} criteria failed", outcomes.len() - passed);
    }
    Ok(())
}

fn cmd_presets() {
    for p in preset_registry().iter() {
        println!("{:<30} {}", p.name(), p.description());
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    let result = match cli.command {
        Command::Run { settings, replay } => cmd_run(settings, replay),
        Command::Sweep { settings, seeds } => cmd_sweep(settings, &seeds),
        Command::Check { only, trace, report } => cmd_check(only, trace, report),
        Command::Presets => {
            cmd_presets();
            Ok(())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<Usage>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
