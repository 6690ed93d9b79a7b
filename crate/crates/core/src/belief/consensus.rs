use std::fmt;
use std::sync::Arc;

use super::BeliefVector;
use crate::error::{Error, Result};
use crate::graph::STOCHASTIC_TOL;
use crate::registry::{Named, Registry};

/// Pools a weighted neighbourhood of beliefs into one belief.
pub trait ConsensusRule: Named + Send + Sync + fmt::Debug {
    /// `neighborhood` holds `(w_ij, b_j)` pairs whose weights sum to one.
    fn combine(&self, neighborhood: &[(f64, &BeliefVector)]) -> Result<BeliefVector>;
}

fn check_neighborhood(neighborhood: &[(f64, &BeliefVector)]) -> Result<usize> {
    let first = neighborhood
        .first()
        .ok_or_else(|| Error::Precondition("empty neighbourhood".into()))?;
    let m = first.1.len();
    let mut total = 0.0;
    for (w, b) in neighborhood {
        if !(*w >= 0.0) {
            return Err(Error::Precondition(format!("negative consensus weight {w}")));
        }
        if b.len() != m {
            return Err(Error::Structural(format!("beliefs of length {} and {m}", b.len())));
        }
        total += w;
    }
    if (total - 1.0).abs() > STOCHASTIC_TOL {
        return Err(Error::Precondition(format!("consensus weights sum to {total}")));
    }
    Ok(m)
}

/// Normalized weighted geometric mean: averaging in log space.
#[derive(Debug, Clone, Copy, Default)]
pub struct LogConsensus;

impl Named for LogConsensus {
    fn name(&self) -> &str {
        "log"
    }
}

impl ConsensusRule for LogConsensus {
    fn combine(&self, neighborhood: &[(f64, &BeliefVector)]) -> Result<BeliefVector> {
        let m = check_neighborhood(neighborhood)?;
        let mut log_w = vec![0.0; m];
        for (w, b) in neighborhood {
            for (acc, p) in log_w.iter_mut().zip(b.probs()) {
                *acc += w * p.ln();
            }
        }
        BeliefVector::from_log_weights(&log_w)
    }
}

/// Weighted arithmetic mean of the beliefs.
#[derive(Debug, Clone, Copy, Default)]
pub struct LinearConsensus;

impl Named for LinearConsensus {
    fn name(&self) -> &str {
        "linear"
    }
}

impl ConsensusRule for LinearConsensus {
    fn combine(&self, neighborhood: &[(f64, &BeliefVector)]) -> Result<BeliefVector> {
        let m = check_neighborhood(neighborhood)?;
        let mut avg = vec![0.0; m];
        for (w, b) in neighborhood {
            for (acc, p) in avg.iter_mut().zip(b.probs()) {
                *acc += w * p;
            }
        }
        // Renormalize away rounding so the simplex tolerance holds exactly.
        let s: f64 = avg.iter().sum();
        avg.iter_mut().for_each(|p| *p /= s);
        BeliefVector::new(avg)
    }
}

pub fn log_consensus(neighborhood: &[(f64, &BeliefVector)]) -> Result<BeliefVector> {
    LogConsensus.combine(neighborhood)
}

pub fn linear_consensus(neighborhood: &[(f64, &BeliefVector)]) -> Result<BeliefVector> {
    LinearConsensus.combine(neighborhood)
}

pub fn consensus_registry() -> Registry<dyn ConsensusRule> {
    let mut reg: Registry<dyn ConsensusRule> = Registry::new("consensus rule");
    reg.register(Arc::new(LogConsensus)).register(Arc::new(LinearConsensus));
    reg
}
