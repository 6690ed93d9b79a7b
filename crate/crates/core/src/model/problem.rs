//! Problem kinds selectable by name from configs and the command line.

use std::sync::Arc;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::{CostModel, GroundPlume, IdealPlume, ParameterSet, QuadraticCost, Theta};
use crate::error::{Error, Result};
use crate::graph::{Topology, WeightMatrix};
use crate::registry::{Named, Registry};

/// Everything a problem kind may depend on besides its own parameters.
pub struct BuildContext<'a> {
    pub n_agents: usize,
    pub weights: &'a WeightMatrix,
}

/// A fully built problem instance.
#[derive(Debug, Clone)]
pub struct Problem {
    pub cost: Arc<dyn CostModel>,
    pub params: ParameterSet,
    /// Per-agent starting decisions suggested by the problem, if any.
    pub default_initial: Option<Vec<Vec<f64>>>,
}

pub trait ProblemKind: Named + Send + Sync {
    /// Parameters with every field filled in.
    fn default_params(&self) -> serde_json::Value;

    /// Fills any missing fields from the defaults and returns the complete
    /// parameter object.
    fn resolve(&self, params: &serde_json::Value) -> Result<serde_json::Value>;

    fn build(&self, params: &serde_json::Value, ctx: &BuildContext<'_>) -> Result<Problem>;
}

/// Name plus parameter object, as stored in run configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub kind: String,
    #[serde(default)]
    pub params: serde_json::Value,
}

impl ProblemSpec {
    pub fn new(kind: &str, params: serde_json::Value) -> Self {
        Self {
            kind: kind.to_string(),
            params,
        }
    }

    /// Default parameters of a registered kind.
    pub fn default_for(kind: &str) -> Result<Self> {
        let k = problem_registry().get(kind)?;
        Ok(Self::new(kind, k.default_params()))
    }

    pub fn resolved(&self) -> Result<Self> {
        let k = problem_registry().get(&self.kind)?;
        Ok(Self::new(&self.kind, k.resolve(&self.params)?))
    }

    pub fn build(&self, ctx: &BuildContext<'_>) -> Result<Problem> {
        problem_registry().get(&self.kind)?.build(&self.params, ctx)
    }

    /// Overwrites one parameter field, e.g. `dim`.
    pub fn set_param(&mut self, key: &str, value: serde_json::Value) {
        if !self.params.is_object() {
            self.params = serde_json::Value::Object(Default::default());
        }
        self.params[key] = value;
    }
}

pub fn problem_registry() -> Registry<dyn ProblemKind> {
    let mut reg: Registry<dyn ProblemKind> = Registry::new("problem");
    reg.register(Arc::new(QuadraticKind))
        .register(Arc::new(IdealPlumeKind))
        .register(Arc::new(GroundPlumeKind));
    reg
}

fn parse<T: DeserializeOwned>(kind: &str, params: &serde_json::Value) -> Result<T> {
    let v = if params.is_null() {
        serde_json::Value::Object(Default::default())
    } else {
        params.clone()
    };
    serde_json::from_value(v).map_err(|e| Error::InvalidParameter(format!("{kind} parameters: {e}")))
}

fn initial_for(positions: &[[f64; 2]], n: usize) -> Option<Vec<Vec<f64>>> {
    (positions.len() == n).then(|| positions.iter().map(|p| p.to_vec()).collect())
}

/// Where the quadratic targets `d_i = e_i·1` take their eigenvalues from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TargetSource {
    /// Eigenvalues of the run's own weight matrix.
    Weights,
    /// Eigenvalues of the Metropolis–Hastings matrix of a path over the same
    /// agents, independent of the communication topology.
    PathReference,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct QuadraticParams {
    dim: usize,
    candidates: Vec<f64>,
    true_index: usize,
    targets: TargetSource,
}

impl Default for QuadraticParams {
    fn default() -> Self {
        Self {
            dim: 6,
            candidates: vec![1.0, 2.5, 4.0],
            true_index: 1,
            targets: TargetSource::Weights,
        }
    }
}

/// `‖θ·x − d_i‖²` with targets from weight-matrix eigenvalues.
pub struct QuadraticKind;

impl Named for QuadraticKind {
    fn name(&self) -> &str {
        "quadratic"
    }
}

impl ProblemKind for QuadraticKind {
    fn default_params(&self) -> serde_json::Value {
        serde_json::to_value(QuadraticParams::default()).expect("serializable")
    }

    fn resolve(&self, params: &serde_json::Value) -> Result<serde_json::Value> {
        Ok(serde_json::to_value(parse::<QuadraticParams>(self.name(), params)?)?)
    }

    fn build(&self, params: &serde_json::Value, ctx: &BuildContext<'_>) -> Result<Problem> {
        let p: QuadraticParams = parse(self.name(), params)?;
        let ps = ParameterSet::scalars(&p.candidates, p.true_index)?;
        let targets = match p.targets {
            TargetSource::Weights => ctx.weights.eigenvalues_ascending(),
            TargetSource::PathReference if ctx.n_agents == 1 => vec![1.0],
            TargetSource::PathReference => {
                WeightMatrix::metropolis_hastings(&Topology::path(ctx.n_agents)?)?.eigenvalues_ascending()
            }
        };
        let cost = QuadraticCost::with_targets(targets, &ps, p.dim)?;
        Ok(Problem {
            cost: Arc::new(cost),
            params: ps,
            default_initial: None,
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct IdealPlumeParams {
    c0: f64,
    sigma1: f64,
    sigma2: f64,
    candidates: Vec<[f64; 2]>,
    true_index: usize,
    initial_positions: Vec<[f64; 2]>,
}

impl Default for IdealPlumeParams {
    fn default() -> Self {
        Self {
            c0: 100.0,
            sigma1: 2.0,
            sigma2: 2.0,
            candidates: vec![[0.0, 0.0], [4.0, 3.0], [2.0, -2.0]],
            true_index: 0,
            initial_positions: vec![[-2.0, 0.0], [-0.5, 3.0], [2.0, 4.0], [4.0, -1.0], [1.0, -3.0]],
        }
    }
}

/// Planar Gaussian plume; θ is the source location.
pub struct IdealPlumeKind;

impl Named for IdealPlumeKind {
    fn name(&self) -> &str {
        "ideal-plume"
    }
}

impl ProblemKind for IdealPlumeKind {
    fn default_params(&self) -> serde_json::Value {
        serde_json::to_value(IdealPlumeParams::default()).expect("serializable")
    }

    fn resolve(&self, params: &serde_json::Value) -> Result<serde_json::Value> {
        Ok(serde_json::to_value(parse::<IdealPlumeParams>(self.name(), params)?)?)
    }

    fn build(&self, params: &serde_json::Value, ctx: &BuildContext<'_>) -> Result<Problem> {
        let p: IdealPlumeParams = parse(self.name(), params)?;
        let ps = ParameterSet::new(p.candidates.iter().map(|c| Theta(c.to_vec())).collect(), p.true_index)?;
        let cost = IdealPlume::new(ctx.n_agents, p.c0, p.sigma1, p.sigma2, &ps)?;
        Ok(Problem {
            cost: Arc::new(cost),
            params: ps,
            default_initial: initial_for(&p.initial_positions, ctx.n_agents),
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct GroundPlumeParams {
    q: f64,
    u: f64,
    sigma_y: f64,
    sigma_z: f64,
    candidates: Vec<f64>,
    true_index: usize,
    initial_positions: Vec<[f64; 2]>,
}

impl Default for GroundPlumeParams {
    fn default() -> Self {
        Self {
            q: 500.0,
            u: 3.0,
            sigma_y: 2.0,
            sigma_z: 2.0,
            candidates: vec![3.0, 0.5, 6.0],
            true_index: 0,
            initial_positions: vec![[-5.0, 2.0], [-2.0, 10.0], [0.0, 8.0], [3.0, 5.0], [3.5, 0.0]],
        }
    }
}

/// Reflected plume above ground; θ is the source height.
pub struct GroundPlumeKind;

impl Named for GroundPlumeKind {
    fn name(&self) -> &str {
        "ground-plume"
    }
}

impl ProblemKind for GroundPlumeKind {
    fn default_params(&self) -> serde_json::Value {
        serde_json::to_value(GroundPlumeParams::default()).expect("serializable")
    }

    fn resolve(&self, params: &serde_json::Value) -> Result<serde_json::Value> {
        Ok(serde_json::to_value(parse::<GroundPlumeParams>(self.name(), params)?)?)
    }

    fn build(&self, params: &serde_json::Value, ctx: &BuildContext<'_>) -> Result<Problem> {
        let p: GroundPlumeParams = parse(self.name(), params)?;
        let ps = ParameterSet::scalars(&p.candidates, p.true_index)?;
        let cost = GroundPlume::new(ctx.n_agents, p.q, p.u, p.sigma_y, p.sigma_z, &ps)?;
        Ok(Problem {
            cost: Arc::new(cost),
            params: ps,
            default_initial: initial_for(&p.initial_positions, ctx.n_agents),
        })
    }
}
