//! Belief-weighted expected cost, stepsize schedules and the distributed
//! gradient step.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::belief::{BeliefState, BeliefVector};
use crate::error::{Error, Result};
use crate::graph::WeightMatrix;
use crate::model::{CostModel, ParameterSet, Smoothness, Theta};

/// Cap used when the smoothness constant is unknown.
pub const DEFAULT_CAP: f64 = 0.999;
/// Cap used when the user disables clamping; keeps α(t) inside (0, 1).
pub const UNCAPPED: f64 = 1.0 - 1e-9;

/// `α(t) = min(cap, γ/(t + T₀))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepsizePolicy {
    pub gamma: f64,
    pub offset: f64,
    pub cap: f64,
}

impl StepsizePolicy {
    pub fn new(gamma: f64, offset: f64, cap: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma.is_finite()) || !(offset > 0.0 && offset.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "stepsize needs positive gamma and offset, got {gamma}, {offset}"
            )));
        }
        if !(cap > 0.0 && cap < 1.0) {
            return Err(Error::InvalidParameter(format!("stepsize cap must lie in (0, 1), got {cap}")));
        }
        Ok(Self { gamma, offset, cap })
    }

    /// Cap at `1/(2L)` when smoothness is known, else [`DEFAULT_CAP`].
    pub fn with_smoothness(gamma: f64, offset: f64, smoothness: Option<Smoothness>) -> Result<Self> {
        Self::new(gamma, offset, Self::safe_cap(smoothness))
    }

    pub fn safe_cap(smoothness: Option<Smoothness>) -> f64 {
        match smoothness {
            Some(s) => (1.0 / (2.0 * s.lipschitz) - 1e-12).min(DEFAULT_CAP),
            None => DEFAULT_CAP,
        }
    }

    pub fn at(&self, t: usize) -> f64 {
        self.cap.min(self.gamma / (t as f64 + self.offset))
    }

    /// `Σ_{s<t} α(s)`, the total step applied before state `t`.
    pub fn cumulative(&self, t: usize) -> f64 {
        (0..t).map(|s| self.at(s)).sum()
    }
}

fn check_dims(cm: &dyn CostModel, x: &[f64], q: &BeliefVector, params: &ParameterSet) -> Result<()> {
    if x.len() != cm.decision_dim() || q.len() != params.len() {
        return Err(Error::Structural(format!(
            "decision of length {} (model wants {}), belief of length {} for {} candidates",
            x.len(),
            cm.decision_dim(),
            q.len(),
            params.len()
        )));
    }
    Ok(())
}

/// `F_i(x, q) = Σ_m q_m J_i(x, θ_m)`.
pub fn expected_cost(cm: &dyn CostModel, agent: usize, x: &[f64], q: &BeliefVector, params: &ParameterSet) -> Result<f64> {
    check_dims(cm, x, q, params)?;
    Ok(params
        .candidates()
        .iter()
        .zip(q.probs())
        .map(|(th, qm)| qm * cm.cost(agent, x, th))
        .sum())
}

/// `∇ₓF_i(x, q)`.
pub fn expected_gradient(
    cm: &dyn CostModel,
    agent: usize,
    x: &[f64],
    q: &BeliefVector,
    params: &ParameterSet,
) -> Result<Vec<f64>> {
    check_dims(cm, x, q, params)?;
    let mut total = vec![0.0; x.len()];
    let mut g = vec![0.0; x.len()];
    for (th, qm) in params.candidates().iter().zip(q.probs()) {
        cm.gradient(agent, x, th, &mut g);
        total.iter_mut().zip(&g).for_each(|(t, gk)| *t += qm * gk);
    }
    Ok(total)
}

/// Decisions of every agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionState {
    pub per_agent: Vec<Vec<f64>>,
}

impl DecisionState {
    pub fn new(per_agent: Vec<Vec<f64>>) -> Result<Self> {
        let p = per_agent.first().map_or(0, Vec::len);
        if per_agent.is_empty() || p == 0 {
            return Err(Error::InvalidSize {
                what: "decision state",
                got: 0,
                min: 1,
            });
        }
        if per_agent.iter().any(|x| x.len() != p) {
            return Err(Error::Structural("agents hold decisions of different dimension".into()));
        }
        if per_agent.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NumericalInput("non-finite decision entry".into()));
        }
        Ok(Self { per_agent })
    }

    pub fn zeros(n_agents: usize, dim: usize) -> Self {
        Self {
            per_agent: vec![vec![0.0; dim]; n_agents],
        }
    }

    pub fn n_agents(&self) -> usize {
        self.per_agent.len()
    }

    pub fn dim(&self) -> usize {
        self.per_agent.first().map_or(0, Vec::len)
    }

    /// Agent mean `x̄`.
    pub fn mean(&self) -> Vec<f64> {
        let n = self.n_agents() as f64;
        let mut m = vec![0.0; self.dim()];
        for x in &self.per_agent {
            m.iter_mut().zip(x).for_each(|(a, v)| *a += v / n);
        }
        m
    }

    /// `‖x − 1x̄‖₂` over the stacked decisions.
    pub fn consensus_error(&self) -> f64 {
        let m = self.mean();
        self.per_agent
            .iter()
            .flat_map(|x| x.iter().zip(&m).map(|(v, a)| (v - a).powi(2)))
            .sum::<f64>()
            .sqrt()
    }

    /// Largest per-agent Euclidean distance to `target`.
    pub fn max_distance(&self, target: &[f64]) -> f64 {
        self.per_agent.iter().map(|x| distance(x, target)).fold(0.0, f64::max)
    }
}

pub fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u - v).powi(2)).sum::<f64>().sqrt()
}

/// One synchronous gradient-then-mix round:
/// `x_i ← Σ_j w_ij (x_j − α ∇F_j(x_j, q_j))`.
pub fn decision_round(
    ds: &DecisionState,
    w: &WeightMatrix,
    beliefs: &BeliefState,
    cm: &dyn CostModel,
    params: &ParameterSet,
    alpha: f64,
) -> Result<DecisionState> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidParameter(format!("stepsize must lie in (0, 1), got {alpha}")));
    }
    let n = ds.n_agents();
    if w.n() != n || beliefs.n_agents() != n || cm.n_agents() != n {
        return Err(Error::Structural(format!(
            "decision round: {n} decisions, {} weight rows, {} beliefs, model for {} agents",
            w.n(),
            beliefs.n_agents(),
            cm.n_agents()
        )));
    }
    let stepped: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|j| {
            let x = &ds.per_agent[j];
            let g = expected_gradient(cm, j, x, &beliefs.per_agent[j], params)?;
            Ok(x.iter().zip(&g).map(|(v, gk)| v - alpha * gk).collect())
        })
        .collect::<Result<_>>()?;
    let per_agent: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut out = vec![0.0; ds.dim()];
            for (j, wij) in w.neighborhood(i) {
                out.iter_mut().zip(&stepped[j]).for_each(|(o, z)| *o += wij * z);
            }
            out
        })
        .collect();
    if per_agent.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NumericalInput("decision update produced a non-finite entry".into()));
    }
    Ok(DecisionState { per_agent })
}

pub const OPTIMUM_GRAD_TOL: f64 = 1e-12;
const OPTIMUM_MAX_ITERS: usize = 1_000_000;

fn network_cost(cm: &dyn CostModel, x: &[f64], theta: &Theta) -> f64 {
    let n = cm.n_agents();
    (0..n).map(|i| cm.cost(i, x, theta)).sum::<f64>() / n as f64
}

fn network_gradient(cm: &dyn CostModel, x: &[f64], theta: &Theta) -> Vec<f64> {
    let n = cm.n_agents() as f64;
    let mut total = vec![0.0; x.len()];
    let mut g = vec![0.0; x.len()];
    for i in 0..cm.n_agents() {
        cm.gradient(i, x, theta, &mut g);
        total.iter_mut().zip(&g).for_each(|(t, gk)| *t += gk / n);
    }
    total
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

/// Minimizer of `(1/N) Σ_i J_i(·, θ)`: closed form when the model has one,
/// otherwise backtracking gradient descent from the model's guess until the
/// gradient norm reaches [`OPTIMUM_GRAD_TOL`].
pub fn solve_optimum(cm: &dyn CostModel, theta: &Theta) -> Result<Vec<f64>> {
    if let Some(x) = cm.analytic_optimum(theta) {
        return Ok(x);
    }
    let mut x = cm.optimum_guess(theta);
    let mut f = network_cost(cm, &x, theta);
    let mut g = network_gradient(cm, &x, theta);
    let mut step = 1.0;
    for _ in 0..OPTIMUM_MAX_ITERS {
        let gn = norm(&g);
        if gn <= OPTIMUM_GRAD_TOL {
            return Ok(x);
        }
        let mut accepted = false;
        while step > 1e-20 {
            let cand: Vec<f64> = x.iter().zip(&g).map(|(v, gk)| v - step * gk).collect();
            let fc = network_cost(cm, &cand, theta);
            let gc = network_gradient(cm, &cand, theta);
            // Sufficient decrease (or no increase beyond rounding, once cost
            // differences vanish) with a step no longer than 1/L locally.
            let dg = g.iter().zip(&gc).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            let short = dg <= gn && norm(&gc) < gn;
            let armijo = fc <= f - 1e-4 * step * gn * gn;
            let flat = fc <= f + 4.0 * f64::EPSILON * f.abs();
            if short && (armijo || flat) {
                x = cand;
                f = fc;
                g = gc;
                step *= 1.5;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    Err(Error::NoConvergence {
        iterations: OPTIMUM_MAX_ITERS,
        residual: norm(&g),
    })
}
