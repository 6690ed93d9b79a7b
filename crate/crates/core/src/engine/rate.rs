//! Empirical convergence-rate measurements on recorded traces.

use serde::{Deserialize, Serialize};

use super::TraceRecord;
use crate::belief::BELIEF_FLOOR;
use crate::descent::StepsizePolicy;
use crate::error::{Error, Result};

pub const MIN_FIT_POINTS: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RateMetric {
    /// `‖x − 1x̄‖²`.
    ConsensusErrorSq,
    /// Average belief in candidate `m`.
    CandidateBelief(usize),
}

impl RateMetric {
    fn value(&self, r: &TraceRecord) -> f64 {
        match *self {
            RateMetric::ConsensusErrorSq => r.consensus_error * r.consensus_error,
            RateMetric::CandidateBelief(m) => r.qbar[m],
        }
    }

    fn usable(&self, v: f64) -> bool {
        match self {
            RateMetric::ConsensusErrorSq => v > 0.0 && v.is_finite(),
            // Values pinned at the floor carry no rate information.
            RateMetric::CandidateBelief(_) => v > 2.0 * BELIEF_FLOOR && v.is_finite(),
        }
    }
}

/// Least-squares slope of `log(metric)` against `log(t)` over the last
/// `window` fraction of the recorded iterations.
pub fn fit_rate_slope(records: &[TraceRecord], metric: RateMetric, window: f64) -> Result<f64> {
    if !(window > 0.0 && window <= 1.0) {
        return Err(Error::Diagnostics(format!("window fraction must lie in (0, 1], got {window}")));
    }
    let t_max = records.iter().map(|r| r.t).max().unwrap_or(0) as f64;
    let start = (1.0 - window) * t_max;
    let pts: Vec<(f64, f64)> = records
        .iter()
        .filter(|r| r.t > 0 && r.t as f64 >= start)
        .map(|r| (r.t as f64, metric.value(r)))
        .filter(|&(_, v)| metric.usable(v))
        .map(|(t, v)| (t.ln(), v.ln()))
        .collect();
    if pts.len() < MIN_FIT_POINTS {
        return Err(Error::Diagnostics(format!(
            "{} usable points in the fit window, need {MIN_FIT_POINTS}",
            pts.len()
        )));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx <= 0.0 {
        return Err(Error::Diagnostics("degenerate fit window".into()));
    }
    Ok(sxy / sxx)
}

/// Outcome of the exponential belief bound for one view of the beliefs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    pub passed: bool,
    /// Smallest `log(bound) − log(belief)` past burn-in; negative on failure.
    pub worst_margin: f64,
    pub worst_t: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateBoundReport {
    pub candidate: usize,
    /// Using the agent-average belief.
    pub average: BoundCheck,
    /// Using the largest per-agent belief.
    pub worst_agent: BoundCheck,
}

/// Checks `q(θ_m) ≤ exp(−(Z − ε) Σ_{s<t} α(s))` at every recorded `t` past
/// `burn_in`, for the average belief and for the worst agent.
pub fn check_rate_bound(
    records: &[TraceRecord],
    candidate: usize,
    z: f64,
    pol: &StepsizePolicy,
    slack: f64,
    burn_in: usize,
) -> RateBoundReport {
    let mut avg = BoundCheck {
        passed: true,
        worst_margin: f64::INFINITY,
        worst_t: 0,
    };
    let mut worst = avg;
    let mut cum = 0.0;
    let mut next_t = 0;
    for r in records {
        while next_t < r.t {
            cum += pol.at(next_t);
            next_t += 1;
        }
        if r.t < burn_in {
            continue;
        }
        let log_bound = -(z - slack) * cum;
        let update = |check: &mut BoundCheck, q: f64| {
            let margin = log_bound - q.ln();
            if margin < check.worst_margin {
                check.worst_margin = margin;
                check.worst_t = r.t;
            }
            if margin < 0.0 {
                check.passed = false;
            }
        };
        update(&mut avg, r.qbar[candidate]);
        if let Some(q) = r.qmax.get(candidate) {
            update(&mut worst, *q);
        }
    }
    RateBoundReport {
        candidate,
        average: avg,
        worst_agent: worst,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synthetic(f: impl Fn(f64) -> f64, q: impl Fn(usize) -> Vec<f64>) -> Vec<TraceRecord> {
        (0..=1000)
            .map(|t| TraceRecord {
                t,
                alpha: 0.1,
                consensus_error: f(t as f64).sqrt(),
                mean_true_belief: q(t)[0],
                qbar: q(t),
                nu: vec![],
                decision_gap: 0.0,
                qmax: q(t),
                max_agent_distance: 0.0,
            })
            .collect()
    }

    #[test]
    fn power_laws() {
        let uni = |_| vec![0.5, 0.5];
        let r = synthetic(|t| 3.0 / (t * t), uni);
        assert!((fit_rate_slope(&r, RateMetric::ConsensusErrorSq, 0.5).unwrap() + 2.0).abs() < 0.01);
        let r = synthetic(|t| 0.7 / t, uni);
        assert!((fit_rate_slope(&r, RateMetric::ConsensusErrorSq, 0.5).unwrap() + 1.0).abs() < 0.01);
    }

    #[test]
    fn fit_needs_data() {
        let r = synthetic(|_| 0.0, |_| vec![0.5, 0.5]);
        assert!(matches!(fit_rate_slope(&r, RateMetric::ConsensusErrorSq, 0.5), Err(Error::Diagnostics(_))));
        let r = synthetic(|t| 1.0 / t, |_| vec![0.5, 0.5]);
        assert!(fit_rate_slope(&r[..30], RateMetric::ConsensusErrorSq, 1.0).is_err());
        assert!(fit_rate_slope(&r, RateMetric::ConsensusErrorSq, 0.0).is_err());
        let floored = synthetic(|t| 1.0 / t, |_| vec![1.0, BELIEF_FLOOR]);
        assert!(fit_rate_slope(&floored, RateMetric::CandidateBelief(1), 0.5).is_err());
    }

    #[test]
    fn zero_rate_holds_trivially() {
        let r = synthetic(|t| 1.0 / t, |_| vec![0.5, 0.5]);
        let pol = StepsizePolicy::new(1.0, 3.0, 0.999).unwrap();
        let rep = check_rate_bound(&r, 1, 0.0, &pol, 0.0, 0);
        assert!(rep.average.passed && rep.worst_agent.passed);
    }

    #[test]
    fn uniform_beliefs_fail_positive_rate() {
        let r = synthetic(|t| 1.0 / t, |_| vec![0.5, 0.5]);
        let pol = StepsizePolicy::new(1.0, 3.0, 0.999).unwrap();
        let rep = check_rate_bound(&r, 1, 0.5, &pol, 0.01, 200);
        assert!(!rep.average.passed);
        assert!(rep.average.worst_margin < 0.0);
    }

    #[test]
    fn exact_exponential_decay_passes_with_slack() {
        let pol = StepsizePolicy::new(1.0, 3.0, 0.999).unwrap();
        let z = 2.0;
        let r = synthetic(|t| 1.0 / t, |t| {
            let q = (-z * pol.cumulative(t)).exp();
            vec![1.0 - q, q]
        });
        assert!(check_rate_bound(&r, 1, z, &pol, 0.5 * z, 200).average.passed);
        assert!(check_rate_bound(&r, 1, z, &pol, 0.0, 0).average.worst_margin.abs() < 1e-9);
        assert!(!check_rate_bound(&r, 1, 1.1 * z, &pol, 0.0, 200).average.passed);
    }
}
