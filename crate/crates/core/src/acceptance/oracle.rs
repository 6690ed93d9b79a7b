//! Independent reference computations used to cross-check the library.
//! Everything here is deliberately naive: plain loops, no shared helpers.

use crate::model::{CostModel, Theta};

/// Central finite-difference gradient with step `1e-5·(1+|x_k|)`.
pub fn fd_gradient(cm: &dyn CostModel, agent: usize, x: &[f64], theta: &Theta) -> Vec<f64> {
    let mut g = vec![0.0; x.len()];
    let mut probe = x.to_vec();
    for k in 0..x.len() {
        let h = 1e-5 * (1.0 + x[k].abs());
        probe[k] = x[k] + h;
        let up = cm.cost(agent, &probe, theta);
        probe[k] = x[k] - h;
        let down = cm.cost(agent, &probe, theta);
        probe[k] = x[k];
        g[k] = (up - down) / (2.0 * h);
    }
    g
}

/// `‖a − b‖ / max(‖a‖, ‖b‖, 1e-8)`.
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt();
    let na: f64 = a.iter().map(|p| p * p).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|q| q * q).sum::<f64>().sqrt();
    diff / na.max(nb).max(1e-8)
}

fn normalize_logs(lw: &[f64]) -> Vec<f64> {
    let mx = lw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let s: f64 = lw.iter().map(|l| (l - mx).exp()).sum();
    lw.iter().map(|l| (l - mx).exp() / s).collect()
}

/// Two-agent belief round written out by hand: fractional posterior per
/// agent, then weighted geometric (or arithmetic) pooling.
pub fn belief_round_two(
    q: [&[f64]; 2],
    log_liks: [&[f64]; 2],
    w: [[f64; 2]; 2],
    alpha: f64,
    log_pool: bool,
) -> [Vec<f64>; 2] {
    let m = q[0].len();
    let b: Vec<Vec<f64>> = (0..2)
        .map(|i| normalize_logs(&(0..m).map(|k| q[i][k].ln() + alpha * log_liks[i][k]).collect::<Vec<_>>()))
        .collect();
    let pool = |i: usize| -> Vec<f64> {
        if log_pool {
            normalize_logs(&(0..m).map(|k| w[i][0] * b[0][k].ln() + w[i][1] * b[1][k].ln()).collect::<Vec<_>>())
        } else {
            (0..m).map(|k| w[i][0] * b[0][k] + w[i][1] * b[1][k]).collect()
        }
    };
    [pool(0), pool(1)]
}

/// Two-agent decision round for `Σ_m q_m ‖θ_m x − d_i‖²`, gradient first,
/// then mixing.
pub fn quadratic_decision_round_two(
    x: [&[f64]; 2],
    q: [&[f64]; 2],
    thetas: &[f64],
    d: [f64; 2],
    w: [[f64; 2]; 2],
    alpha: f64,
) -> [Vec<f64>; 2] {
    let p = x[0].len();
    let stepped: Vec<Vec<f64>> = (0..2)
        .map(|j| {
            (0..p)
                .map(|k| {
                    let mut g = 0.0;
                    for (m, th) in thetas.iter().enumerate() {
                        g += q[j][m] * 2.0 * th * (th * x[j][k] - d[j]);
                    }
                    x[j][k] - alpha * g
                })
                .collect()
        })
        .collect();
    let mix = |i: usize| -> Vec<f64> { (0..p).map(|k| w[i][0] * stepped[0][k] + w[i][1] * stepped[1][k]).collect() };
    [mix(0), mix(1)]
}
