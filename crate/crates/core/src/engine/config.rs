use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::belief::consensus_registry;
use crate::error::{Error, Result};
use crate::graph::TopologySpec;
use crate::model::ProblemSpec;

/// `γ/(t + T₀)`; the cap is derived from the problem at build time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepsizeSpec {
    pub gamma: f64,
    pub offset: f64,
}

impl Default for StepsizeSpec {
    fn default() -> Self {
        Self {
            gamma: 10.0,
            offset: 80.0,
        }
    }
}

impl fmt::Display for StepsizeSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{}", self.gamma, self.offset)
    }
}

impl FromStr for StepsizeSpec {
    type Err = Error;

    /// Parses `GAMMA,OFFSET`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidParameter(format!("stepsize must be GAMMA,OFFSET, got '{s}'"));
        let (g, o) = s.split_once(',').ok_or_else(bad)?;
        let gamma: f64 = g.trim().parse().map_err(|_| bad())?;
        let offset: f64 = o.trim().parse().map_err(|_| bad())?;
        if !(gamma > 0.0 && offset > 0.0 && gamma.is_finite() && offset.is_finite()) {
            return Err(Error::InvalidParameter(format!("stepsize gamma and offset must be positive, got '{s}'")));
        }
        Ok(Self { gamma, offset })
    }
}

/// How agents' starting decisions are chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitialDecisions {
    /// The problem's suggested positions when it has them, zeros otherwise.
    ProblemDefault,
    Zeros,
    Explicit(Vec<Vec<f64>>),
}

fn is_false(b: &bool) -> bool {
    !*b
}

/// Complete description of one run. The resolved form stored in trace
/// headers reproduces the run exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub label: String,
    pub problem: ProblemSpec,
    pub n_agents: usize,
    pub topology: TopologySpec,
    pub consensus: String,
    pub stepsize: StepsizeSpec,
    /// Replaces the `1/(2L)` clamp with `1 − 1e-9` and logs violations.
    pub no_cap: bool,
    pub iters: usize,
    /// Observation noise std.
    pub sigma: f64,
    /// Noise std assumed by the agents' likelihoods; defaults to `sigma`,
    /// or 1 when `sigma` is 0.
    pub likelihood_sigma: Option<f64>,
    pub initial: InitialDecisions,
    pub seed: u64,
    pub cadence: usize,
    pub per_agent: bool,
    /// Pins every belief to the true candidate. Test hook.
    #[serde(default, skip_serializing_if = "is_false")]
    pub freeze_beliefs: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            label: "run".into(),
            problem: ProblemSpec::default_for("quadratic").expect("quadratic is registered"),
            n_agents: 5,
            topology: TopologySpec::Path,
            consensus: "log".into(),
            stepsize: StepsizeSpec::default(),
            no_cap: false,
            iters: 5000,
            sigma: 1.0,
            likelihood_sigma: None,
            initial: InitialDecisions::ProblemDefault,
            seed: 0,
            cadence: 1,
            per_agent: false,
            freeze_beliefs: false,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_agents == 0 {
            return Err(Error::InvalidSize {
                what: "agent count",
                got: 0,
                min: 1,
            });
        }
        if self.iters == 0 {
            return Err(Error::InvalidSize {
                what: "iteration budget",
                got: 0,
                min: 1,
            });
        }
        if self.cadence == 0 {
            return Err(Error::InvalidSize {
                what: "trace cadence",
                got: 0,
                min: 1,
            });
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::InvalidParameter(format!("sigma must be finite and >= 0, got {}", self.sigma)));
        }
        if let Some(s) = self.likelihood_sigma {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::InvalidParameter(format!("likelihood sigma must be positive, got {s}")));
            }
        }
        consensus_registry().get(&self.consensus)?;
        if let InitialDecisions::Explicit(rows) = &self.initial {
            if rows.len() != self.n_agents {
                return Err(Error::Structural(format!(
                    "{} initial decisions for {} agents",
                    rows.len(),
                    self.n_agents
                )));
            }
        }
        Ok(())
    }

    pub fn effective_likelihood_sigma(&self) -> f64 {
        self.likelihood_sigma
            .unwrap_or(if self.sigma > 0.0 { self.sigma } else { 1.0 })
    }

    /// Copy with problem parameters and optional fields filled in.
    pub fn resolved(&self) -> Result<Self> {
        let mut c = self.clone();
        c.problem = c.problem.resolved()?;
        c.likelihood_sigma = Some(c.effective_likelihood_sigma());
        Ok(c)
    }
}
