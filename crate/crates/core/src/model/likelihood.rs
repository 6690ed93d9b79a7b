use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{CostModel, ParameterSet, Theta};
use crate::error::{Error, Result};

/// Gaussian observation model `y = J_i(x, θ) + ε`, `ε ~ N(0, σ²)`.
#[derive(Debug, Clone)]
pub struct LikelihoodModel {
    noise_std: f64,
    cost: Arc<dyn CostModel>,
}

/// Per-candidate outcome of the identifiability diagnostic at a decision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentifiabilityEntry {
    pub candidate: usize,
    /// Largest per-agent divergence from the true candidate.
    pub max_kl: f64,
    pub identifiable: bool,
}

impl LikelihoodModel {
    pub fn new(noise_std: f64, cost: Arc<dyn CostModel>) -> Result<Self> {
        if !(noise_std > 0.0 && noise_std.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "likelihood noise std must be positive, got {noise_std}"
            )));
        }
        Ok(Self { noise_std, cost })
    }

    pub fn noise_std(&self) -> f64 {
        self.noise_std
    }

    pub fn cost(&self) -> &dyn CostModel {
        self.cost.as_ref()
    }

    /// Gaussian log-density of `y` centred at `J_i(x, θ)`.
    pub fn log_likelihood(&self, agent: usize, y: f64, x: &[f64], theta: &Theta) -> f64 {
        let s = self.noise_std;
        let r = y - self.cost.cost(agent, x, theta);
        -r * r / (2.0 * s * s) - (s * (2.0 * PI).sqrt()).ln()
    }

    /// Log-likelihood of `y` under every candidate, in candidate order.
    pub fn log_likelihoods(&self, agent: usize, y: f64, x: &[f64], params: &ParameterSet) -> Vec<f64> {
        params
            .candidates()
            .iter()
            .map(|th| self.log_likelihood(agent, y, x, th))
            .collect()
    }

    /// `D_KL(f_i(·|x, θ_a) ‖ f_i(·|x, θ_b))` for two equal-variance Gaussians.
    pub fn kl_divergence(&self, agent: usize, x: &[f64], theta_a: &Theta, theta_b: &Theta) -> f64 {
        let gap = self.cost.cost(agent, x, theta_a) - self.cost.cost(agent, x, theta_b);
        gap * gap / (2.0 * self.noise_std * self.noise_std)
    }

    /// Network-average divergence of candidate `m` from the true one at
    /// `x_star`; sets the exponential decay rate of the false belief.
    pub fn rate_constant(&self, x_star: &[f64], params: &ParameterSet, m: usize) -> Result<f64> {
        let truth = params.true_index();
        if m == truth {
            return Err(Error::InvalidParameter(format!(
                "rate constant needs a false candidate, got the true index {m}"
            )));
        }
        if m >= params.len() {
            return Err(Error::InvalidParameter(format!("candidate {m} out of range")));
        }
        let n = self.cost.n_agents();
        let total: f64 = (0..n)
            .map(|i| self.kl_divergence(i, x_star, params.true_theta(), params.get(m)))
            .sum();
        Ok(total / n as f64)
    }

    /// For each false candidate, whether some agent separates it from the
    /// truth at `x`.
    pub fn identifiability(&self, x: &[f64], params: &ParameterSet) -> Vec<IdentifiabilityEntry> {
        params
            .false_indices()
            .map(|m| {
                let max_kl = (0..self.cost.n_agents())
                    .map(|i| self.kl_divergence(i, x, params.true_theta(), params.get(m)))
                    .fold(0.0, f64::max);
                IdentifiabilityEntry {
                    candidate: m,
                    max_kl,
                    identifiable: max_kl > 0.0,
                }
            })
            .collect()
    }
}
