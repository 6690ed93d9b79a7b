//! Trace records and their CSV / JSON file forms.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use crate::descent::StepsizePolicy;
use crate::error::{Error, Result};
use crate::graph::{Topology, WeightMatrix};
use crate::model::{IdentifiabilityEntry, Smoothness, Theta};
use crate::numfmt::sig;

/// Significant digits for every float in the CSV traces.
pub const CSV_DIGITS: usize = 9;

/// Aggregate metrics of the state at iteration `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub t: usize,
    /// Stepsize applied when leaving state `t`.
    pub alpha: f64,
    /// `‖x − 1x̄‖₂`.
    pub consensus_error: f64,
    pub mean_true_belief: f64,
    /// Agent-average belief per candidate.
    pub qbar: Vec<f64>,
    /// Belief-ratio statistic per false candidate, in candidate order.
    pub nu: Vec<f64>,
    /// `‖x̄ − x_*‖`, NaN when `x_*` is unknown.
    pub decision_gap: f64,
    /// Largest per-agent belief per candidate. Not written to CSV.
    #[serde(skip)]
    pub qmax: Vec<f64>,
    /// Largest per-agent distance to `x_*`. Not written to CSV.
    #[serde(skip)]
    pub max_agent_distance: f64,
}

/// One agent's state at iteration `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentRow {
    pub t: usize,
    pub agent: usize,
    pub q: Vec<f64>,
    pub x: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateConstant {
    pub candidate: usize,
    pub z: f64,
}

/// Status of the modelling assumptions for a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Bounded log-likelihood ratios. Gaussian noise has unbounded support.
    pub bounded_information: String,
    /// The bound itself; unavailable under Gaussian noise.
    pub information_bound: Option<f64>,
    pub doubly_stochastic: bool,
    pub strong_convexity: Option<Smoothness>,
    /// Whether `α(t) < 1/(2L)` holds on every step.
    pub stepsize_condition: String,
    /// Iterations run with `α(t) ≥ 1/(2L)` (only under `no_cap`).
    pub stepsize_violations: usize,
    /// Whether each false candidate is separable from the truth at `x_*`.
    pub identifiability: Vec<IdentifiabilityEntry>,
}

/// JSON sidecar describing a trace. Its `config` reruns the experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub config: RunConfig,
    pub problem: serde_json::Value,
    pub candidates: Vec<Theta>,
    pub true_index: usize,
    pub topology: Topology,
    pub er_resamples: usize,
    pub weights: WeightMatrix,
    pub spectral_gap: f64,
    pub stepsize: StepsizePolicy,
    pub x_star: Option<Vec<f64>>,
    pub x_star_source: String,
    pub rate_constants: Vec<RateConstant>,
    pub diagnostics: Diagnostics,
    pub columns: Vec<String>,
}

impl TraceHeader {
    pub fn false_indices(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.candidates.len()).filter(move |&m| m != self.true_index)
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let mut f = BufWriter::new(File::create(path)?);
        serde_json::to_writer_pretty(&mut f, self)?;
        writeln!(f)?;
        f.flush()?;
        Ok(())
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        let mut s = String::new();
        File::open(path)?.read_to_string(&mut s)?;
        Ok(serde_json::from_str(&s)?)
    }
}

/// Aggregate trace columns for `m` candidates with the given true index.
pub fn trace_columns(m: usize, true_index: usize) -> Vec<String> {
    let mut cols: Vec<String> = ["t", "alpha", "consensus_error", "mean_true_belief"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    cols.extend((0..m).map(|k| format!("qbar_{k}")));
    cols.extend((0..m).filter(|&k| k != true_index).map(|k| format!("nu_{k}")));
    cols.push("decision_gap".into());
    cols
}

pub fn agent_columns(m: usize, p: usize) -> Vec<String> {
    let mut cols = vec!["t".to_string(), "agent".to_string()];
    cols.extend((0..m).map(|k| format!("q_{k}")));
    cols.extend((0..p).map(|k| format!("x_{k}")));
    cols
}

pub fn write_trace_csv<W: Write>(out: W, columns: &[String], records: &[TraceRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(columns)?;
    for r in records {
        let mut row = vec![r.t.to_string(), sig(r.alpha, CSV_DIGITS), sig(r.consensus_error, CSV_DIGITS)];
        row.push(sig(r.mean_true_belief, CSV_DIGITS));
        row.extend(r.qbar.iter().chain(&r.nu).map(|v| sig(*v, CSV_DIGITS)));
        row.push(sig(r.decision_gap, CSV_DIGITS));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_agent_csv<W: Write>(out: W, columns: &[String], rows: &[AgentRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(columns)?;
    for r in rows {
        let mut row = vec![r.t.to_string(), r.agent.to_string()];
        row.extend(r.q.iter().chain(&r.x).map(|v| sig(*v, CSV_DIGITS)));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// A trace CSV read back from disk.
#[derive(Debug, Clone)]
pub struct ParsedTrace {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl ParsedTrace {
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[k]).collect())
    }
}

fn structural(msg: String) -> Error {
    Error::Structural(msg)
}

/// Reads an aggregate trace and checks its structure: column layout,
/// strictly increasing `t`, stepsizes in (0, 1), nonnegative consensus
/// errors and average beliefs on the simplex.
pub fn read_trace_csv<R: Read>(input: R) -> Result<ParsedTrace> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let columns: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let m = columns.iter().filter(|c| c.starts_with("qbar_")).count();
    let n_nu = columns.iter().filter(|c| c.starts_with("nu_")).count();
    if m == 0 || n_nu + 1 != m {
        return Err(structural(format!("{m} qbar columns and {n_nu} nu columns")));
    }
    let true_index = (0..m)
        .find(|k| !columns.contains(&format!("nu_{k}")))
        .ok_or_else(|| structural("no candidate is marked true".into()))?;
    let expect = trace_columns(m, true_index);
    if columns != expect {
        return Err(structural(format!("columns {columns:?}, expected {expect:?}")));
    }
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() != columns.len() {
            return Err(structural(format!("row {line} has {} fields", rec.len())));
        }
        let row = rec
            .iter()
            .map(|f| f.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<f64>, _>>()
            .map_err(|e| structural(format!("row {line}: {e}")))?;
        let t = row[0];
        if t < 0.0 || t.fract() != 0.0 || rows.last().is_some_and(|prev| prev[0] >= t) {
            return Err(structural(format!("row {line}: iteration {t} out of order")));
        }
        if !(row[1] > 0.0 && row[1] < 1.0) {
            return Err(structural(format!("row {line}: stepsize {} outside (0, 1)", row[1])));
        }
        if !(row[2] >= 0.0) {
            return Err(structural(format!("row {line}: consensus error {}", row[2])));
        }
        let qbar = &row[4..4 + m];
        let sum: f64 = qbar.iter().sum();
        if qbar.iter().any(|q| !(0.0..=1.0).contains(q)) || (sum - 1.0).abs() > 1e-6 {
            return Err(structural(format!("row {line}: average beliefs {qbar:?} off the simplex")));
        }
        if (row[3] - qbar[true_index]).abs() > 1e-8 {
            return Err(structural(format!("row {line}: mean_true_belief disagrees with qbar_{true_index}")));
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(structural("trace has no rows".into()));
    }
    Ok(ParsedTrace { columns, rows })
}

pub fn read_trace_file(path: &Path) -> Result<ParsedTrace> {
    read_trace_csv(File::open(path)?)
}

/// Paths of the files written for one run.
#[derive(Debug, Clone)]
pub struct TracePaths {
    pub trace: PathBuf,
    pub header: PathBuf,
    pub agents: Option<PathBuf>,
}

impl TracePaths {
    pub fn for_label(dir: &Path, label: &str, per_agent: bool) -> Self {
        Self {
            trace: dir.join(format!("{label}.csv")),
            header: dir.join(format!("{label}.header.json")),
            agents: per_agent.then(|| dir.join(format!("{label}.agents.csv"))),
        }
    }
}
