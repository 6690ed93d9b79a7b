//! Seed sweeps and their aggregate summary.

use std::ops::Range;
use std::path::Path;

use anyhow::Result;
use fracbayes::engine::{run, RunConfig, RunSummary};
use rayon::prelude::*;
use serde::Serialize;

use crate::settings::usage;

/// Parses `N` (seeds `0..N`) or `A..B`.
pub fn parse_seeds(s: &str) -> Result<Range<u64>> {
    let bad = || usage(format!("--seeds must be N or A..B, got '{s}'"));
    let range = match s.split_once("..") {
        Some((a, b)) => a.trim().parse().map_err(|_| bad())?..b.trim().parse().map_err(|_| bad())?,
        None => 0..s.trim().parse().map_err(|_| bad())?,
    };
    if range.is_empty() {
        return Err(usage(format!("seed range '{s}' is empty")));
    }
    Ok(range)
}

#[derive(Debug, Serialize)]
pub struct SeedOutcome {
    pub seed: u64,
    pub runs: Vec<RunSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Success fractions for one position in a preset's expansion, e.g. the
/// "linear" half of a paired comparison.
#[derive(Debug, Serialize)]
pub struct VariantStats {
    pub variant: usize,
    pub runs: usize,
    pub belief_at_least_099: f64,
    pub max_distance_at_most_005: f64,
    pub reached_belief_09: f64,
    pub mean_iters_to_belief_09: Option<f64>,
}

#[derive(Debug, Serialize)]
pub struct Aggregate {
    pub preset: Option<String>,
    pub seeds: Vec<u64>,
    pub failed_seeds: Vec<u64>,
    pub variants: Vec<VariantStats>,
    pub per_seed: Vec<SeedOutcome>,
}

/// Runs one seed's configurations in order and writes their traces.
pub fn run_seed(seed: u64, configs: Result<Vec<RunConfig>>, out: &Path) -> SeedOutcome {
    let mut runs = Vec::new();
    let attempt = || -> Result<()> {
        for cfg in configs? {
            let output = run(cfg)?;
            output.write_files(out)?;
            println!("{}", output.summary());
            runs.push(output.summary());
        }
        Ok(())
    };
    let error = attempt().err().map(|e| {
        log::error!("seed {seed} failed: {e:#}");
        format!("{e:#}")
    });
    SeedOutcome { seed, runs, error }
}

pub fn sweep(seeds: Range<u64>, out: &Path, resolve: impl Fn(u64) -> Result<Vec<RunConfig>> + Sync) -> Vec<SeedOutcome> {
    seeds
        .into_par_iter()
        .map(|seed| run_seed(seed, resolve(seed), out))
        .collect()
}

fn fraction(hits: usize, n: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        hits as f64 / n as f64
    }
}

pub fn aggregate(preset: Option<String>, per_seed: Vec<SeedOutcome>) -> Aggregate {
    let width = per_seed.iter().map(|s| s.runs.len()).max().unwrap_or(0);
    let variants = (0..width)
        .map(|v| {
            let runs: Vec<&RunSummary> = per_seed.iter().filter_map(|s| s.runs.get(v)).collect();
            let n = runs.len();
            let reached: Vec<f64> = runs.iter().filter_map(|r| r.iters_to_belief_09).map(|t| t as f64).collect();
            VariantStats {
                variant: v,
                runs: n,
                belief_at_least_099: fraction(runs.iter().filter(|r| r.final_mean_true_belief >= 0.99).count(), n),
                max_distance_at_most_005: fraction(runs.iter().filter(|r| r.max_agent_distance <= 0.05).count(), n),
                reached_belief_09: fraction(reached.len(), n),
                mean_iters_to_belief_09: (!reached.is_empty()).then(|| reached.iter().sum::<f64>() / reached.len() as f64),
            }
        })
        .collect();
    Aggregate {
        preset,
        seeds: per_seed.iter().map(|s| s.seed).collect(),
        failed_seeds: per_seed.iter().filter(|s| s.error.is_some()).map(|s| s.seed).collect(),
        variants,
        per_seed,
    }
}
