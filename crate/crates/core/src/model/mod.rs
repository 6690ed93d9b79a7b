//! Candidate parameters, per-agent cost models and the Gaussian observation
//! likelihood.

mod likelihood;
mod plume;
mod problem;
mod quadratic;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use likelihood::{IdentifiabilityEntry, LikelihoodModel};
pub use plume::{GroundPlume, IdealPlume};
pub use problem::{
    problem_registry, BuildContext, GroundPlumeKind, IdealPlumeKind, Problem, ProblemKind, ProblemSpec, QuadraticKind,
    TargetSource,
};
pub use quadratic::QuadraticCost;

/// One candidate value of the unknown parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Theta(pub Vec<f64>);

impl Theta {
    pub fn scalar(v: f64) -> Self {
        Theta(vec![v])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

impl fmt::Display for Theta {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let [v] = self.0.as_slice() {
            write!(f, "{v}")
        } else {
            write!(f, "(")?;
            for (k, v) in self.0.iter().enumerate() {
                if k > 0 {
                    write!(f, ", ")?;
                }
                write!(f, "{v}")?;
            }
            write!(f, ")")
        }
    }
}

/// The finite candidate set Θ and the index of the data-generating value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterSet {
    candidates: Vec<Theta>,
    true_index: usize,
}

impl ParameterSet {
    pub fn new(candidates: Vec<Theta>, true_index: usize) -> Result<Self> {
        if candidates.is_empty() {
            return Err(Error::InvalidSize {
                what: "parameter set",
                got: 0,
                min: 1,
            });
        }
        if true_index >= candidates.len() {
            return Err(Error::InvalidParameter(format!(
                "true index {true_index} out of range for {} candidates",
                candidates.len()
            )));
        }
        let dim = candidates[0].dim();
        if dim == 0 || candidates.iter().any(|c| c.dim() != dim) {
            return Err(Error::InvalidParameter("candidates must share a nonzero dimension".into()));
        }
        if candidates.iter().flat_map(|c| &c.0).any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("non-finite candidate value".into()));
        }
        for (a, ca) in candidates.iter().enumerate() {
            if candidates[a + 1..].contains(ca) {
                return Err(Error::InvalidParameter(format!("duplicate candidate {ca}")));
            }
        }
        Ok(Self { candidates, true_index })
    }

    pub fn scalars(values: &[f64], true_index: usize) -> Result<Self> {
        Self::new(values.iter().copied().map(Theta::scalar).collect(), true_index)
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn candidates(&self) -> &[Theta] {
        &self.candidates
    }

    pub fn get(&self, m: usize) -> &Theta {
        &self.candidates[m]
    }

    pub fn true_index(&self) -> usize {
        self.true_index
    }

    pub fn true_theta(&self) -> &Theta {
        &self.candidates[self.true_index]
    }

    /// Indices of every candidate other than the true one.
    pub fn false_indices(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len()).filter(move |&m| m != self.true_index)
    }
}

/// Strong-convexity and gradient-Lipschitz constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Smoothness {
    pub mu: f64,
    pub lipschitz: f64,
}

/// Per-agent objective `J_i(x, θ)` with its analytic gradient in `x`.
pub trait CostModel: Send + Sync + fmt::Debug {
    fn kind(&self) -> &'static str;

    fn n_agents(&self) -> usize;

    fn decision_dim(&self) -> usize;

    fn cost(&self, agent: usize, x: &[f64], theta: &Theta) -> f64;

    /// Writes `∇ₓJ_i(x, θ)` into `out` (length `decision_dim`).
    fn gradient(&self, agent: usize, x: &[f64], theta: &Theta, out: &mut [f64]);

    fn smoothness(&self) -> Option<Smoothness> {
        None
    }

    /// Closed-form minimizer of `(1/N) Σ_i J_i(·, θ)`, when one exists.
    fn analytic_optimum(&self, _theta: &Theta) -> Option<Vec<f64>> {
        None
    }

    /// Starting point for a numerical search of that minimizer.
    fn optimum_guess(&self, _theta: &Theta) -> Vec<f64> {
        vec![0.0; self.decision_dim()]
    }

    /// Name and every numeric constant, for trace headers.
    fn descriptor(&self) -> serde_json::Value;
}

/// Allocating convenience wrapper around [`CostModel::gradient`].
pub fn gradient_vec(cm: &dyn CostModel, agent: usize, x: &[f64], theta: &Theta) -> Vec<f64> {
    let mut g = vec![0.0; cm.decision_dim()];
    cm.gradient(agent, x, theta, &mut g);
    g
}

#[cfg(test)]
pub(crate) mod testutil {
    pub use crate::acceptance::oracle::{fd_gradient, rel_err};
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parameter_set_validation() {
        assert!(ParameterSet::scalars(&[], 0).is_err());
        assert!(ParameterSet::scalars(&[1.0, 2.0], 2).is_err());
        assert!(ParameterSet::scalars(&[1.0, 1.0], 0).is_err());
        assert!(ParameterSet::new(vec![Theta(vec![1.0]), Theta(vec![1.0, 2.0])], 0).is_err());
        let ps = ParameterSet::scalars(&[1.0, 2.5, 4.0], 1).unwrap();
        assert_eq!(ps.false_indices().collect::<Vec<_>>(), vec![0, 2]);
        assert_eq!(ps.true_theta(), &Theta::scalar(2.5));
    }
}
