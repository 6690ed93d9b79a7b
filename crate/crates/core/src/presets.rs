//! Named experiments. Each preset expands, for a seed, into the run
//! configurations it compares.

use std::sync::Arc;

use serde_json::json;

use crate::engine::{RunConfig, StepsizeSpec};
use crate::graph::TopologySpec;
use crate::model::ProblemSpec;
use crate::registry::{Named, Registry};

pub const QUADRATIC_ITERS: usize = 5000;
pub const ER_ITERS: usize = 3000;
pub const PLUME_ITERS: usize = 20_000;
pub const ER_AGENTS: usize = 30;
pub const ER_PROBABILITIES: [f64; 2] = [0.6, 0.2];
pub const ABLATION_STEPSIZES: [(f64, f64); 3] = [(10.0, 80.0), (1.0, 3.0), (1.0, 5.0)];

pub trait ExperimentPreset: Named + Send + Sync {
    fn description(&self) -> &str;

    /// Run configurations for `seed`, in a fixed order.
    fn expand(&self, seed: u64) -> Vec<RunConfig>;
}

fn base(label: String, seed: u64) -> RunConfig {
    RunConfig {
        label,
        seed,
        iters: QUADRATIC_ITERS,
        ..RunConfig::default()
    }
}

fn problem(kind: &str) -> ProblemSpec {
    ProblemSpec::default_for(kind).expect("built-in problem kind")
}

pub struct QuadraticPath5;

impl Named for QuadraticPath5 {
    fn name(&self) -> &str {
        "quadratic-path5"
    }
}

impl ExperimentPreset for QuadraticPath5 {
    fn description(&self) -> &str {
        "near-sharp quadratic, 5 agents on a path, log consensus"
    }

    fn expand(&self, seed: u64) -> Vec<RunConfig> {
        vec![base(format!("{}-s{seed}", self.name()), seed)]
    }
}

pub struct StepsizeAblation;

impl Named for StepsizeAblation {
    fn name(&self) -> &str {
        "quadratic-stepsize-ablation"
    }
}

impl ExperimentPreset for StepsizeAblation {
    fn description(&self) -> &str {
        "quadratic preset under 10/(t+80), 1/(t+3) and 1/(t+5)"
    }

    fn expand(&self, seed: u64) -> Vec<RunConfig> {
        ABLATION_STEPSIZES
            .iter()
            .map(|&(gamma, offset)| RunConfig {
                stepsize: StepsizeSpec { gamma, offset },
                ..base(format!("{}-g{gamma}-o{offset}-s{seed}", self.name()), seed)
            })
            .collect()
    }
}

pub struct ConsensusCompare;

impl Named for ConsensusCompare {
    fn name(&self) -> &str {
        "consensus-compare"
    }
}

impl ExperimentPreset for ConsensusCompare {
    fn description(&self) -> &str {
        "log vs linear belief consensus on the quadratic preset, same observation noise"
    }

    fn expand(&self, seed: u64) -> Vec<RunConfig> {
        ["log", "linear"]
            .iter()
            .map(|rule| RunConfig {
                consensus: rule.to_string(),
                ..base(format!("{}-{rule}-s{seed}", self.name()), seed)
            })
            .collect()
    }
}

pub struct ErTopology;

impl Named for ErTopology {
    fn name(&self) -> &str {
        "er-topology"
    }
}

impl ExperimentPreset for ErTopology {
    fn description(&self) -> &str {
        "30 agents on Erdős–Rényi graphs with edge probability 0.6 and 0.2"
    }

    fn expand(&self, seed: u64) -> Vec<RunConfig> {
        ER_PROBABILITIES
            .iter()
            .map(|&p| RunConfig {
                n_agents: ER_AGENTS,
                topology: TopologySpec::ErdosRenyi { p },
                problem: ProblemSpec::new("quadratic", json!({ "targets": "path-reference" })),
                iters: ER_ITERS,
                ..base(format!("{}-p{p}-s{seed}", self.name()), seed)
            })
            .collect()
    }
}

pub struct SourceIdeal;

impl Named for SourceIdeal {
    fn name(&self) -> &str {
        "source-ideal"
    }
}

impl ExperimentPreset for SourceIdeal {
    fn description(&self) -> &str {
        "five agents locating a planar Gaussian plume source"
    }

    fn expand(&self, seed: u64) -> Vec<RunConfig> {
        vec![RunConfig {
            problem: problem("ideal-plume"),
            iters: PLUME_ITERS,
            ..base(format!("{}-s{seed}", self.name()), seed)
        }]
    }
}

pub struct SourceGround;

impl Named for SourceGround {
    fn name(&self) -> &str {
        "source-ground"
    }
}

impl ExperimentPreset for SourceGround {
    fn description(&self) -> &str {
        "five agents locating the height of a plume source above ground"
    }

    fn expand(&self, seed: u64) -> Vec<RunConfig> {
        vec![RunConfig {
            problem: problem("ground-plume"),
            iters: PLUME_ITERS,
            ..base(format!("{}-s{seed}", self.name()), seed)
        }]
    }
}

pub fn preset_registry() -> Registry<dyn ExperimentPreset> {
    let mut reg: Registry<dyn ExperimentPreset> = Registry::new("preset");
    reg.register(Arc::new(QuadraticPath5))
        .register(Arc::new(StepsizeAblation))
        .register(Arc::new(ConsensusCompare))
        .register(Arc::new(ErTopology))
        .register(Arc::new(SourceIdeal))
        .register(Arc::new(SourceGround));
    reg
}
