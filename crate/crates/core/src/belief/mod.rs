//! Belief vectors and the two-stage belief update: a fractional Bayesian
//! posterior followed by a consensus step over the gossip weights.

mod consensus;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::WeightMatrix;

pub use consensus::{consensus_registry, linear_consensus, log_consensus, ConsensusRule, LinearConsensus, LogConsensus};

/// Smallest probability any belief entry may take. Log-consensus takes the
/// log of every entry, so exact zeros must never appear.
pub const BELIEF_FLOOR: f64 = 1e-300;

const SIMPLEX_TOL: f64 = 1e-12;

/// Probability vector over the candidate set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BeliefVector(Vec<f64>);

impl BeliefVector {
    /// Validates a probability vector (nonnegative, sums to one) and lifts
    /// entries below [`BELIEF_FLOOR`].
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InvalidSize {
                what: "belief vector",
                got: 0,
                min: 1,
            });
        }
        if probs.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::Precondition(format!("belief entries must be finite and nonnegative: {probs:?}")));
        }
        let s: f64 = probs.iter().sum();
        if (s - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::Precondition(format!("belief sums to {s}, not 1")));
        }
        Ok(Self::floored(probs))
    }

    pub fn uniform(m: usize) -> Self {
        Self(vec![1.0 / m as f64; m])
    }

    /// Point mass on candidate `k`, floored.
    pub fn indicator(m: usize, k: usize) -> Self {
        let mut v = vec![0.0; m];
        v[k] = 1.0;
        Self::floored(v)
    }

    /// Normalizes unnormalized log-weights with max subtraction.
    pub fn from_log_weights(log_w: &[f64]) -> Result<Self> {
        if log_w.is_empty() {
            return Err(Error::InvalidSize {
                what: "belief vector",
                got: 0,
                min: 1,
            });
        }
        let max = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            return Err(Error::NumericalInput(format!("log-weights have no finite maximum: {log_w:?}")));
        }
        let exps: Vec<f64> = log_w.iter().map(|l| (l - max).exp()).collect();
        let total: f64 = exps.iter().sum();
        Ok(Self::floored(exps.into_iter().map(|e| e / total).collect()))
    }

    fn floored(mut probs: Vec<f64>) -> Self {
        if probs.iter().any(|&p| p < BELIEF_FLOOR) {
            probs.iter_mut().for_each(|p| *p = p.max(BELIEF_FLOOR));
            let s: f64 = probs.iter().sum();
            probs.iter_mut().for_each(|p| *p /= s);
        }
        Self(probs)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn get(&self, m: usize) -> f64 {
        self.0[m]
    }

    /// Checks the simplex invariants (floor, upper bound, unit sum).
    pub fn is_valid(&self) -> bool {
        let s: f64 = self.0.iter().sum();
        self.0.iter().all(|&p| (BELIEF_FLOOR..=1.0).contains(&p)) && (s - 1.0).abs() <= SIMPLEX_TOL
    }
}

/// Beliefs of every agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeliefState {
    pub per_agent: Vec<BeliefVector>,
}

impl BeliefState {
    pub fn uniform(n_agents: usize, m: usize) -> Self {
        Self {
            per_agent: vec![BeliefVector::uniform(m); n_agents],
        }
    }

    pub fn n_agents(&self) -> usize {
        self.per_agent.len()
    }

    pub fn n_candidates(&self) -> usize {
        self.per_agent.first().map_or(0, BeliefVector::len)
    }

    /// Agent-average belief `q̄`.
    pub fn average(&self) -> Vec<f64> {
        let n = self.n_agents() as f64;
        let mut avg = vec![0.0; self.n_candidates()];
        for b in &self.per_agent {
            avg.iter_mut().zip(b.probs()).for_each(|(a, p)| *a += p / n);
        }
        avg
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("fraction alpha must lie in (0, 1), got {alpha}")))
    }
}

/// Prior tempered by the likelihood raised to `alpha`, normalized in log
/// space.
pub fn fractional_posterior(prior: &BeliefVector, log_liks: &[f64], alpha: f64) -> Result<BeliefVector> {
    check_alpha(alpha)?;
    if log_liks.len() != prior.len() {
        return Err(Error::Structural(format!(
            "{} log-likelihoods for {} candidates",
            log_liks.len(),
            prior.len()
        )));
    }
    if let Some(l) = log_liks.iter().find(|l| !l.is_finite()) {
        return Err(Error::NumericalInput(format!("log-likelihood {l}")));
    }
    let log_w: Vec<f64> = prior.probs().iter().zip(log_liks).map(|(p, l)| p.ln() + alpha * l).collect();
    BeliefVector::from_log_weights(&log_w)
}

/// One synchronous belief round: every agent forms its fractional posterior
/// from its own observation, then pools its neighbours' posteriors (itself
/// included) with `rule` over its row of `w`.
pub fn belief_round(
    state: &BeliefState,
    w: &WeightMatrix,
    log_liks: &[Vec<f64>],
    alpha: f64,
    rule: &dyn ConsensusRule,
) -> Result<BeliefState> {
    let n = state.n_agents();
    if w.n() != n || log_liks.len() != n {
        return Err(Error::Structural(format!(
            "belief round: {n} agents, {}×{} weights, {} likelihood rows",
            w.n(),
            w.n(),
            log_liks.len()
        )));
    }
    let posteriors: Vec<BeliefVector> = state
        .per_agent
        .par_iter()
        .zip(log_liks.par_iter())
        .map(|(prior, ll)| fractional_posterior(prior, ll, alpha))
        .collect::<Result<_>>()?;
    let per_agent = (0..n)
        .into_par_iter()
        .map(|i| {
            let hood: Vec<(f64, &BeliefVector)> = w.neighborhood(i).map(|(j, wij)| (wij, &posteriors[j])).collect();
            rule.combine(&hood)
        })
        .collect::<Result<_>>()?;
    Ok(BeliefState { per_agent })
}

/// `(1/N) Σ_i q_i(θ_m) / q_i(θ_*)`.
pub fn belief_ratio_statistic(state: &BeliefState, true_index: usize, m: usize) -> f64 {
    let n = state.n_agents() as f64;
    state.per_agent.iter().map(|b| b.get(m) / b.get(true_index)).sum::<f64>() / n
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Topology;
    use proptest::prelude::*;

    fn bv(p: &[f64]) -> BeliefVector {
        BeliefVector::new(p.to_vec()).unwrap()
    }

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn posterior_tiny_alpha_keeps_prior() {
        let prior = bv(&[0.2, 0.3, 0.5]);
        let post = fractional_posterior(&prior, &[-1.0, -50.0, 3.0], 1e-12).unwrap();
        assert!(close(post.probs(), prior.probs(), 1e-9));
    }

    #[test]
    fn posterior_single_candidate() {
        let post = fractional_posterior(&BeliefVector::uniform(1), &[-123.0], 0.4).unwrap();
        assert_eq!(post.probs(), &[1.0]);
    }

    #[test]
    fn posterior_hand_value() {
        // (√0.8, √0.2)/(√0.8 + √0.2) = (2/3, 1/3).
        let post = fractional_posterior(&bv(&[0.5, 0.5]), &[0.8f64.ln(), 0.2f64.ln()], 0.5).unwrap();
        assert!(close(post.probs(), &[2.0 / 3.0, 1.0 / 3.0], 1e-12));
    }

    #[test]
    fn posterior_rejects_bad_inputs() {
        let prior = BeliefVector::uniform(2);
        assert!(matches!(fractional_posterior(&prior, &[0.0, f64::NAN], 0.5), Err(Error::NumericalInput(_))));
        assert!(matches!(
            fractional_posterior(&prior, &[0.0, f64::NEG_INFINITY], 0.5),
            Err(Error::NumericalInput(_))
        ));
        assert!(fractional_posterior(&prior, &[0.0, 0.0], 1.0).is_err());
        assert!(fractional_posterior(&prior, &[0.0, 0.0], 0.0).is_err());
        assert!(fractional_posterior(&prior, &[0.0], 0.5).is_err());
    }

    #[test]
    fn posterior_survives_huge_log_likelihoods() {
        let prior = bv(&[0.3, 0.3, 0.4]);
        let post = fractional_posterior(&prior, &[-1e6, 1e6, -1e6], 0.9).unwrap();
        assert!(post.is_valid());
        assert!(post.get(1) > 1.0 - 1e-12);
        assert_eq!(post.get(0), BELIEF_FLOOR);
    }

    #[test]
    fn indicator_is_floored() {
        let b = BeliefVector::indicator(3, 1);
        assert!(b.is_valid());
        assert_eq!(b.get(0), BELIEF_FLOOR);
    }

    #[test]
    fn ratio_statistic_cases() {
        let s = BeliefState::uniform(4, 3);
        assert!((belief_ratio_statistic(&s, 0, 2) - 1.0).abs() < 1e-15);
        let s = BeliefState {
            per_agent: vec![bv(&[0.8, 0.2]), bv(&[0.8, 0.2])],
        };
        assert!((belief_ratio_statistic(&s, 0, 1) - 0.25).abs() < 1e-15);
        assert_eq!(belief_ratio_statistic(&s, 1, 1), 1.0);
    }

    #[test]
    fn round_single_agent_is_posterior() {
        let w = WeightMatrix::from_rows(&[vec![1.0]]).unwrap();
        let s = BeliefState {
            per_agent: vec![bv(&[0.25, 0.75])],
        };
        let ll = vec![vec![-0.3, -2.0]];
        let out = belief_round(&s, &w, &ll, 0.3, &LogConsensus).unwrap();
        let post = fractional_posterior(&s.per_agent[0], &ll[0], 0.3).unwrap();
        assert!(close(out.per_agent[0].probs(), post.probs(), 1e-15));
    }

    #[test]
    fn round_identical_information_keeps_agents_equal() {
        let w = WeightMatrix::metropolis_hastings(&Topology::path(4).unwrap()).unwrap();
        let s = BeliefState::uniform(4, 3);
        let ll = vec![vec![-1.0, -0.2, -3.0]; 4];
        let out = belief_round(&s, &w, &ll, 0.5, &LogConsensus).unwrap();
        for b in &out.per_agent {
            assert!(close(b.probs(), out.per_agent[0].probs(), 1e-15));
        }
    }

    #[test]
    fn round_rejects_dimension_mismatch() {
        let w = WeightMatrix::metropolis_hastings(&Topology::path(3).unwrap()).unwrap();
        let s = BeliefState::uniform(4, 2);
        assert!(matches!(
            belief_round(&s, &w, &vec![vec![0.0, 0.0]; 4], 0.5, &LogConsensus),
            Err(Error::Structural(_))
        ));
    }

    /// Scripted two-agent round, written out term by term.
    #[test]
    fn round_two_agent_hand_script() {
        let w = WeightMatrix::from_rows(&[vec![0.7, 0.3], vec![0.3, 0.7]]).unwrap();
        let s = BeliefState {
            per_agent: vec![bv(&[0.6, 0.4]), bv(&[0.1, 0.9])],
        };
        let ll = vec![vec![-0.5, -2.5], vec![-1.5, -0.25]];
        let a = 0.4;
        let b0 = [0.6 * (a * -0.5f64).exp(), 0.4 * (a * -2.5f64).exp()];
        let b0 = [b0[0] / (b0[0] + b0[1]), b0[1] / (b0[0] + b0[1])];
        let b1 = [0.1 * (a * -1.5f64).exp(), 0.9 * (a * -0.25f64).exp()];
        let b1 = [b1[0] / (b1[0] + b1[1]), b1[1] / (b1[0] + b1[1])];
        let pool = |wa: f64, wb: f64| {
            let u = [b0[0].powf(wa) * b1[0].powf(wb), b0[1].powf(wa) * b1[1].powf(wb)];
            [u[0] / (u[0] + u[1]), u[1] / (u[0] + u[1])]
        };
        let out = belief_round(&s, &w, &ll, a, &LogConsensus).unwrap();
        assert!(close(out.per_agent[0].probs(), &pool(0.7, 0.3), 1e-12));
        assert!(close(out.per_agent[1].probs(), &pool(0.3, 0.7), 1e-12));
    }

    fn simplex(m: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(1e-6f64..1.0, m).prop_map(|v| {
            let s: f64 = v.iter().sum();
            v.into_iter().map(|x| x / s).collect()
        })
    }

    proptest! {
        #[test]
        fn posterior_stays_on_simplex(
            prior in simplex(4),
            ll in prop::collection::vec(-1e6f64..1e6, 4),
            alpha in 1e-6f64..0.999,
        ) {
            let post = fractional_posterior(&BeliefVector::new(prior).unwrap(), &ll, alpha).unwrap();
            prop_assert!(post.is_valid());
            prop_assert!(post.probs().iter().all(|p| p.is_finite()));
        }

        #[test]
        fn posterior_label_equivariant(
            prior in simplex(4),
            ll in prop::collection::vec(-50f64..50.0, 4),
            alpha in 0.01f64..0.99,
            rot in 0usize..4,
        ) {
            let perm = |v: &[f64]| { let mut v = v.to_vec(); v.rotate_left(rot); v };
            let a = fractional_posterior(&BeliefVector::new(prior.clone()).unwrap(), &ll, alpha).unwrap();
            let b = fractional_posterior(&BeliefVector::new(perm(&prior)).unwrap(), &perm(&ll), alpha).unwrap();
            prop_assert!(close(&perm(a.probs()), b.probs(), 1e-12));
        }

        #[test]
        fn round_stays_on_simplex(
            priors in prop::collection::vec(simplex(3), 5),
            ll in prop::collection::vec(prop::collection::vec(-1e3f64..1e3, 3), 5),
            alpha in 0.001f64..0.999,
            linear in any::<bool>(),
        ) {
            let w = WeightMatrix::metropolis_hastings(&Topology::path(5).unwrap()).unwrap();
            let s = BeliefState { per_agent: priors.into_iter().map(|p| BeliefVector::new(p).unwrap()).collect() };
            let rule: &dyn ConsensusRule = if linear { &LinearConsensus } else { &LogConsensus };
            let out = belief_round(&s, &w, &ll, alpha, rule).unwrap();
            prop_assert!(out.per_agent.iter().all(BeliefVector::is_valid));
        }

        /// Without information the log-ratio spread around its network
        /// average cannot grow under log-consensus.
        #[test]
        fn log_consensus_contracts_spread(
            priors in prop::collection::vec(simplex(3), 5),
            alpha in 0.01f64..0.99,
        ) {
            let w = WeightMatrix::metropolis_hastings(&Topology::path(5).unwrap()).unwrap();
            let s = BeliefState { per_agent: priors.into_iter().map(|p| BeliefVector::new(p).unwrap()).collect() };
            let ll = vec![vec![-0.7; 3]; 5];
            let out = belief_round(&s, &w, &ll, alpha, &LogConsensus).unwrap();
            let spread = |st: &BeliefState| {
                let mut worst = 0.0f64;
                for m in [1, 2] {
                    let r: Vec<f64> = st.per_agent.iter().map(|b| (b.get(m) / b.get(0)).ln()).collect();
                    let avg = r.iter().sum::<f64>() / r.len() as f64;
                    worst = worst.max(r.iter().map(|x| (x - avg).abs()).fold(0.0, f64::max));
                }
                worst
            };
            prop_assert!(spread(&out) <= spread(&s) + 1e-9);
        }
    }
}
