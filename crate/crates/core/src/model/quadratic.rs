use serde_json::json;

use super::{CostModel, ParameterSet, Smoothness, Theta};
use crate::error::{Error, Result};
use crate::graph::WeightMatrix;

/// `J_i(x, θ) = ‖θ·x − d_i‖²` with `d_i = e_i·1`.
#[derive(Debug, Clone)]
pub struct QuadraticCost {
    targets: Vec<f64>,
    dim: usize,
    smoothness: Smoothness,
}

impl QuadraticCost {
    /// Targets are the eigenvalues of `w`, ascending: agent `i` gets the
    /// `i`-th smallest.
    pub fn from_weights(w: &WeightMatrix, params: &ParameterSet, dim: usize) -> Result<Self> {
        Self::with_targets(w.eigenvalues_ascending(), params, dim)
    }

    pub fn with_targets(targets: Vec<f64>, params: &ParameterSet, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidSize {
                what: "decision dimension",
                got: 0,
                min: 1,
            });
        }
        if targets.is_empty() || targets.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidParameter("targets must be finite and nonempty".into()));
        }
        let mut lo = f64::INFINITY;
        let mut hi = 0.0f64;
        for c in params.candidates() {
            match c.as_slice() {
                [v] if *v > 0.0 => {
                    lo = lo.min(*v);
                    hi = hi.max(*v);
                }
                _ => {
                    return Err(Error::InvalidParameter(format!(
                        "quadratic candidates must be positive scalars, got {c}"
                    )))
                }
            }
        }
        Ok(Self {
            targets,
            dim,
            smoothness: Smoothness {
                mu: 2.0 * lo * lo,
                lipschitz: 2.0 * hi * hi,
            },
        })
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }
}

fn scalar(theta: &Theta) -> f64 {
    theta.0[0]
}

impl CostModel for QuadraticCost {
    fn kind(&self) -> &'static str {
        "quadratic"
    }

    fn n_agents(&self) -> usize {
        self.targets.len()
    }

    fn decision_dim(&self) -> usize {
        self.dim
    }

    fn cost(&self, agent: usize, x: &[f64], theta: &Theta) -> f64 {
        let (th, d) = (scalar(theta), self.targets[agent]);
        x.iter().map(|&xk| (th * xk - d).powi(2)).sum()
    }

    fn gradient(&self, agent: usize, x: &[f64], theta: &Theta, out: &mut [f64]) {
        let (th, d) = (scalar(theta), self.targets[agent]);
        for (o, &xk) in out.iter_mut().zip(x) {
            *o = 2.0 * th * (th * xk - d);
        }
    }

    fn smoothness(&self) -> Option<Smoothness> {
        Some(self.smoothness)
    }

    fn analytic_optimum(&self, theta: &Theta) -> Option<Vec<f64>> {
        let mean = self.targets.iter().sum::<f64>() / self.targets.len() as f64;
        Some(vec![mean / scalar(theta); self.dim])
    }

    fn descriptor(&self) -> serde_json::Value {
        json!({
            "kind": self.kind(),
            "decision_dim": self.dim,
            "targets": self.targets,
            "mu": self.smoothness.mu,
            "lipschitz": self.smoothness.lipschitz,
        })
    }
}
