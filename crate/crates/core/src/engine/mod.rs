//! Full runs: observation, belief round and decision round per iteration,
//! with metrics recorded along the way.

mod config;
pub mod rate;
pub mod trace;

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::Path;
use std::sync::Arc;

use log::{debug, info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use config::{InitialDecisions, RunConfig, StepsizeSpec};
pub use trace::{
    agent_columns, read_trace_csv, read_trace_file, trace_columns, write_agent_csv, write_trace_csv, AgentRow,
    Diagnostics, ParsedTrace, RateConstant, TraceHeader, TracePaths, TraceRecord,
};

use crate::belief::{belief_ratio_statistic, belief_round, consensus_registry, BeliefState, BeliefVector, ConsensusRule};
use crate::descent::{decision_round, distance, solve_optimum, DecisionState, StepsizePolicy, UNCAPPED};
use crate::error::{Error, Result};
use crate::graph::{spectral_gap, Topology, WeightMatrix};
use crate::model::{BuildContext, LikelihoodModel, Problem, Theta};
use crate::rng::RngStreams;

/// `J_i(x, θ_*) + σ ε` with `ε` drawn from the agent's stream at `t`.
pub fn observe(
    lm: &LikelihoodModel,
    agent: usize,
    x: &[f64],
    true_theta: &Theta,
    sigma: f64,
    streams: &RngStreams,
    t: usize,
) -> f64 {
    let clean = lm.cost().cost(agent, x, true_theta);
    if sigma == 0.0 {
        clean
    } else {
        clean + sigma * streams.observation_noise(agent, t)
    }
}

/// A configured, ready-to-run experiment.
#[derive(Debug)]
pub struct Simulation {
    config: RunConfig,
    topology: Topology,
    er_resamples: usize,
    weights: WeightMatrix,
    spectral_gap: f64,
    problem: Problem,
    likelihood: LikelihoodModel,
    rule: Arc<dyn ConsensusRule>,
    stepsize: StepsizePolicy,
    x_star: Option<Vec<f64>>,
    x_star_source: String,
    rate_constants: Vec<RateConstant>,
    diagnostics: Diagnostics,
    streams: RngStreams,
    initial: DecisionState,
}

/// Everything a run produces.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub header: TraceHeader,
    pub records: Vec<TraceRecord>,
    pub agent_rows: Vec<AgentRow>,
    pub final_beliefs: BeliefState,
    pub final_decisions: DecisionState,
}

/// One-line outcome of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub label: String,
    pub seed: u64,
    pub iters: usize,
    pub final_mean_true_belief: f64,
    pub final_consensus_error: f64,
    pub final_decision_gap: f64,
    pub max_agent_distance: f64,
    /// First recorded iteration with mean true belief at least 0.9.
    pub iters_to_belief_09: Option<usize>,
}

impl Simulation {
    pub fn new(config: RunConfig) -> Result<Self> {
        config.validate()?;
        let config = config.resolved()?;
        let streams = RngStreams::new(config.seed);
        let (topology, er_resamples) = config.topology.build(config.n_agents, &mut streams.topology())?;
        let weights = if config.n_agents == 1 {
            WeightMatrix::from_rows(&[vec![1.0]])?
        } else {
            WeightMatrix::metropolis_hastings(&topology)?
        };
        let gap = spectral_gap(&weights)?;
        let problem = config.problem.build(&BuildContext {
            n_agents: config.n_agents,
            weights: &weights,
        })?;
        if problem.cost.n_agents() != config.n_agents {
            return Err(Error::Structural(format!(
                "problem built for {} agents, run has {}",
                problem.cost.n_agents(),
                config.n_agents
            )));
        }
        let likelihood = LikelihoodModel::new(config.effective_likelihood_sigma(), problem.cost.clone())?;
        let rule = consensus_registry().get(&config.consensus)?;
        let smoothness = problem.cost.smoothness();
        let cap = if config.no_cap {
            UNCAPPED
        } else {
            StepsizePolicy::safe_cap(smoothness)
        };
        let stepsize = StepsizePolicy::new(config.stepsize.gamma, config.stepsize.offset, cap)?;

        let truth = problem.params.true_theta();
        let x_star_source = if problem.cost.analytic_optimum(truth).is_some() {
            "analytic"
        } else {
            "numeric"
        };
        let x_star = match solve_optimum(problem.cost.as_ref(), truth) {
            Ok(x) => Some(x),
            Err(e) => {
                warn!("no optimum for the decision gap: {e}");
                None
            }
        };

        let mut rate_constants = Vec::new();
        let mut identifiability = Vec::new();
        if let Some(x) = &x_star {
            for m in problem.params.false_indices() {
                rate_constants.push(RateConstant {
                    candidate: m,
                    z: likelihood.rate_constant(x, &problem.params, m)?,
                });
            }
            identifiability = likelihood.identifiability(x, &problem.params);
            if let Some(bad) = identifiability.iter().find(|e| !e.identifiable) {
                return Err(Error::Precondition(format!(
                    "candidate {} is indistinguishable from the true parameter at the optimum",
                    bad.candidate
                )));
            }
        }

        let stepsize_condition = match (smoothness, config.no_cap) {
            (Some(_), false) => "satisfied: stepsize capped below 1/(2L)".to_string(),
            (Some(s), true) => {
                let limit = 1.0 / (2.0 * s.lipschitz);
                if stepsize.at(0) >= limit {
                    "violated: cap disabled and early steps exceed 1/(2L)".to_string()
                } else {
                    "satisfied: schedule stays below 1/(2L)".to_string()
                }
            }
            (None, _) => "unverified: smoothness constant unknown".to_string(),
        };
        if smoothness.is_none() {
            warn!("stepsize condition α < 1/(2L) unverified: {} has no smoothness constant", problem.cost.kind());
        }
        let diagnostics = Diagnostics {
            bounded_information: "not satisfied: Gaussian tails".into(),
            information_bound: None,
            doubly_stochastic: weights.check_doubly_stochastic().is_ok(),
            strong_convexity: smoothness,
            stepsize_condition,
            stepsize_violations: 0,
            identifiability,
        };

        let dim = problem.cost.decision_dim();
        let initial = match &config.initial {
            InitialDecisions::ProblemDefault => match &problem.default_initial {
                Some(rows) => DecisionState::new(rows.clone())?,
                None => DecisionState::zeros(config.n_agents, dim),
            },
            InitialDecisions::Zeros => DecisionState::zeros(config.n_agents, dim),
            InitialDecisions::Explicit(rows) => DecisionState::new(rows.clone())?,
        };
        if initial.dim() != dim {
            return Err(Error::Structural(format!(
                "initial decisions have dimension {}, problem needs {dim}",
                initial.dim()
            )));
        }

        Ok(Self {
            config,
            topology,
            er_resamples,
            weights,
            spectral_gap: gap,
            problem,
            likelihood,
            rule,
            stepsize,
            x_star,
            x_star_source: x_star_source.into(),
            rate_constants,
            diagnostics,
            streams,
            initial,
        })
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    pub fn weights(&self) -> &WeightMatrix {
        &self.weights
    }

    pub fn problem(&self) -> &Problem {
        &self.problem
    }

    pub fn likelihood(&self) -> &LikelihoodModel {
        &self.likelihood
    }

    pub fn stepsize(&self) -> &StepsizePolicy {
        &self.stepsize
    }

    pub fn x_star(&self) -> Option<&[f64]> {
        self.x_star.as_deref()
    }

    pub fn rate_constants(&self) -> &[RateConstant] {
        &self.rate_constants
    }

    pub fn header(&self) -> TraceHeader {
        let ps = &self.problem.params;
        TraceHeader {
            config: self.config.clone(),
            problem: self.problem.cost.descriptor(),
            candidates: ps.candidates().to_vec(),
            true_index: ps.true_index(),
            topology: self.topology.clone(),
            er_resamples: self.er_resamples,
            weights: self.weights.clone(),
            spectral_gap: self.spectral_gap,
            stepsize: self.stepsize,
            x_star: self.x_star.clone(),
            x_star_source: self.x_star_source.clone(),
            rate_constants: self.rate_constants.clone(),
            diagnostics: self.diagnostics.clone(),
            columns: trace_columns(ps.len(), ps.true_index()),
        }
    }

    fn observe_all(&self, ds: &DecisionState, t: usize) -> Vec<f64> {
        let truth = self.problem.params.true_theta();
        (0..ds.n_agents())
            .map(|i| observe(&self.likelihood, i, &ds.per_agent[i], truth, self.config.sigma, &self.streams, t))
            .collect()
    }

    fn record(&self, t: usize, beliefs: &BeliefState, ds: &DecisionState) -> TraceRecord {
        let ps = &self.problem.params;
        let truth = ps.true_index();
        let qbar = beliefs.average();
        let qmax = (0..ps.len())
            .map(|m| beliefs.per_agent.iter().map(|b| b.get(m)).fold(0.0, f64::max))
            .collect();
        let (decision_gap, max_agent_distance) = match &self.x_star {
            Some(x) => (distance(&ds.mean(), x), ds.max_distance(x)),
            None => (f64::NAN, f64::NAN),
        };
        TraceRecord {
            t,
            alpha: self.stepsize.at(t),
            consensus_error: ds.consensus_error(),
            mean_true_belief: qbar[truth],
            nu: ps.false_indices().map(|m| belief_ratio_statistic(beliefs, truth, m)).collect(),
            qbar,
            decision_gap,
            qmax,
            max_agent_distance,
        }
    }

    fn agent_rows(t: usize, beliefs: &BeliefState, ds: &DecisionState, out: &mut Vec<AgentRow>) {
        for (agent, (b, x)) in beliefs.per_agent.iter().zip(&ds.per_agent).enumerate() {
            out.push(AgentRow {
                t,
                agent,
                q: b.probs().to_vec(),
                x: x.clone(),
            });
        }
    }

    pub fn run(&self) -> Result<RunOutput> {
        let cfg = &self.config;
        let ps = &self.problem.params;
        let m = ps.len();
        info!(
            "run '{}': {} agents, {} topology, {} consensus, {} iterations, seed {}",
            cfg.label, cfg.n_agents, cfg.topology, cfg.consensus, cfg.iters, cfg.seed
        );
        let mut beliefs = if cfg.freeze_beliefs {
            BeliefState {
                per_agent: vec![BeliefVector::indicator(m, ps.true_index()); cfg.n_agents],
            }
        } else {
            BeliefState::uniform(cfg.n_agents, m)
        };
        let mut ds = self.initial.clone();
        let mut records = Vec::with_capacity(cfg.iters / cfg.cadence + 2);
        let mut agent_rows = Vec::new();
        let mut diagnostics = self.diagnostics.clone();
        let limit = self.problem.cost.smoothness().map(|s| 1.0 / (2.0 * s.lipschitz));

        let mut y = self.observe_all(&ds, 0);
        records.push(self.record(0, &beliefs, &ds));
        if cfg.per_agent {
            Self::agent_rows(0, &beliefs, &ds, &mut agent_rows);
        }
        for t in 0..cfg.iters {
            let alpha = self.stepsize.at(t);
            if let Some(limit) = limit.filter(|l| alpha >= *l) {
                if diagnostics.stepsize_violations == 0 {
                    warn!("stepsize {alpha} at iteration {t} is not below 1/(2L) = {limit}");
                }
                debug!("stepsize violation at iteration {t}: {alpha}");
                diagnostics.stepsize_violations += 1;
            }
            if !cfg.freeze_beliefs {
                let log_liks: Vec<Vec<f64>> = (0..cfg.n_agents)
                    .into_par_iter()
                    .map(|i| self.likelihood.log_likelihoods(i, y[i], &ds.per_agent[i], ps))
                    .collect();
                beliefs = belief_round(&beliefs, &self.weights, &log_liks, alpha, self.rule.as_ref())
                    .map_err(|e| e.at(t))?;
            }
            ds = decision_round(&ds, &self.weights, &beliefs, self.problem.cost.as_ref(), ps, alpha)
                .map_err(|e| e.at(t))?;
            y = self.observe_all(&ds, t + 1);
            let next = t + 1;
            if next % cfg.cadence == 0 || next == cfg.iters {
                records.push(self.record(next, &beliefs, &ds));
                if cfg.per_agent {
                    Self::agent_rows(next, &beliefs, &ds, &mut agent_rows);
                }
            }
        }
        let mut header = self.header();
        header.diagnostics = diagnostics;
        let last = records.last().expect("initial record present");
        info!(
            "run '{}' done: mean true belief {:.6}, consensus error {:.3e}",
            cfg.label, last.mean_true_belief, last.consensus_error
        );
        Ok(RunOutput {
            header,
            records,
            agent_rows,
            final_beliefs: beliefs,
            final_decisions: ds,
        })
    }
}

/// Builds and runs `config` in one call.
pub fn run(config: RunConfig) -> Result<RunOutput> {
    Simulation::new(config)?.run()
}

impl RunOutput {
    pub fn last(&self) -> &TraceRecord {
        self.records.last().expect("runs record at least the initial state")
    }

    /// First recorded iteration whose mean true belief reaches `level`.
    pub fn iters_to_belief(&self, level: f64) -> Option<usize> {
        self.records.iter().find(|r| r.mean_true_belief >= level).map(|r| r.t)
    }

    pub fn summary(&self) -> RunSummary {
        let last = self.last();
        RunSummary {
            label: self.header.config.label.clone(),
            seed: self.header.config.seed,
            iters: self.header.config.iters,
            final_mean_true_belief: last.mean_true_belief,
            final_consensus_error: last.consensus_error,
            final_decision_gap: last.decision_gap,
            max_agent_distance: last.max_agent_distance,
            iters_to_belief_09: self.iters_to_belief(0.9),
        }
    }

    pub fn trace_csv_bytes(&self) -> Result<Vec<u8>> {
        let mut buf = Vec::new();
        write_trace_csv(&mut buf, &self.header.columns, &self.records)?;
        Ok(buf)
    }

    /// Writes trace CSV, header JSON and (if recorded) the per-agent CSV
    /// into `dir`, named after the run label.
    pub fn write_files(&self, dir: &Path) -> Result<TracePaths> {
        fs::create_dir_all(dir)?;
        let cfg = &self.header.config;
        let paths = TracePaths::for_label(dir, &cfg.label, cfg.per_agent);
        write_trace_csv(BufWriter::new(File::create(&paths.trace)?), &self.header.columns, &self.records)?;
        self.header.write_json(&paths.header)?;
        if let Some(p) = &paths.agents {
            let m = self.header.candidates.len();
            let dim = self.final_decisions.dim();
            write_agent_csv(BufWriter::new(File::create(p)?), &agent_columns(m, dim), &self.agent_rows)?;
        }
        Ok(paths)
    }
}

impl std::fmt::Display for RunSummary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{}: seed={} T={} mean_true_belief={:.6} consensus_error={:.3e} decision_gap={:.3e}",
            self.label,
            self.seed,
            self.iters,
            self.final_mean_true_belief,
            self.final_consensus_error,
            self.final_decision_gap
        )
    }
}
