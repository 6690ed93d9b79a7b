use std::f64::consts::PI;

use serde_json::json;

use super::{CostModel, ParameterSet, Theta};
use crate::error::{Error, Result};

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")))
    }
}

/// Negated Gaussian point-source plume in the plane; θ is the source
/// location `(β₁, β₂)`. Every agent samples the same field.
#[derive(Debug, Clone)]
pub struct IdealPlume {
    n_agents: usize,
    c0: f64,
    sigma1: f64,
    sigma2: f64,
}

impl IdealPlume {
    pub fn new(n_agents: usize, c0: f64, sigma1: f64, sigma2: f64, params: &ParameterSet) -> Result<Self> {
        positive("c0", c0)?;
        positive("sigma1", sigma1)?;
        positive("sigma2", sigma2)?;
        if params.candidates().iter().any(|c| c.dim() != 2) {
            return Err(Error::InvalidParameter("plume source candidates must be 2-vectors".into()));
        }
        Ok(Self {
            n_agents,
            c0,
            sigma1,
            sigma2,
        })
    }

    pub fn concentration(&self, x: &[f64], theta: &Theta) -> f64 {
        let (d1, d2) = (x[0] - theta.0[0], x[1] - theta.0[1]);
        self.c0 * (-d1 * d1 / (2.0 * self.sigma1.powi(2)) - d2 * d2 / (2.0 * self.sigma2.powi(2))).exp()
    }
}

impl CostModel for IdealPlume {
    fn kind(&self) -> &'static str {
        "ideal-plume"
    }

    fn n_agents(&self) -> usize {
        self.n_agents
    }

    fn decision_dim(&self) -> usize {
        2
    }

    fn cost(&self, _agent: usize, x: &[f64], theta: &Theta) -> f64 {
        -self.concentration(x, theta)
    }

    fn gradient(&self, _agent: usize, x: &[f64], theta: &Theta, out: &mut [f64]) {
        let c = self.concentration(x, theta);
        out[0] = c * (x[0] - theta.0[0]) / self.sigma1.powi(2);
        out[1] = c * (x[1] - theta.0[1]) / self.sigma2.powi(2);
    }

    fn analytic_optimum(&self, theta: &Theta) -> Option<Vec<f64>> {
        Some(theta.0.clone())
    }

    fn optimum_guess(&self, theta: &Theta) -> Vec<f64> {
        theta.0.clone()
    }

    fn descriptor(&self) -> serde_json::Value {
        json!({
            "kind": self.kind(),
            "c0": self.c0,
            "sigma1": self.sigma1,
            "sigma2": self.sigma2,
        })
    }
}

/// Negated Gaussian plume from a source at height `h` above a reflecting
/// ground plane, sampled at `x = (y, z)`.
#[derive(Debug, Clone)]
pub struct GroundPlume {
    n_agents: usize,
    q: f64,
    u: f64,
    sigma_y: f64,
    sigma_z: f64,
}

impl GroundPlume {
    pub fn new(n_agents: usize, q: f64, u: f64, sigma_y: f64, sigma_z: f64, params: &ParameterSet) -> Result<Self> {
        positive("Q", q)?;
        positive("U", u)?;
        positive("sigma_y", sigma_y)?;
        positive("sigma_z", sigma_z)?;
        if params.candidates().iter().any(|c| c.dim() != 1) {
            return Err(Error::InvalidParameter("source heights must be scalars".into()));
        }
        Ok(Self {
            n_agents,
            q,
            u,
            sigma_y,
            sigma_z,
        })
    }

    fn amplitude(&self) -> f64 {
        self.q / (2.0 * PI * self.sigma_y * self.sigma_z * self.u)
    }

    /// Returns the lateral factor and the direct and reflected vertical
    /// terms.
    fn parts(&self, x: &[f64], h: f64) -> (f64, f64, f64) {
        let (y, z) = (x[0], x[1]);
        let sz2 = 2.0 * self.sigma_z.powi(2);
        (
            (-y * y / (2.0 * self.sigma_y.powi(2))).exp(),
            (-(z - h).powi(2) / sz2).exp(),
            (-(z + h).powi(2) / sz2).exp(),
        )
    }

    pub fn concentration(&self, x: &[f64], theta: &Theta) -> f64 {
        let (ey, direct, reflected) = self.parts(x, theta.0[0]);
        self.amplitude() * ey * (direct + reflected)
    }
}

impl CostModel for GroundPlume {
    fn kind(&self) -> &'static str {
        "ground-plume"
    }

    fn n_agents(&self) -> usize {
        self.n_agents
    }

    fn decision_dim(&self) -> usize {
        2
    }

    fn cost(&self, _agent: usize, x: &[f64], theta: &Theta) -> f64 {
        -self.concentration(x, theta)
    }

    fn gradient(&self, _agent: usize, x: &[f64], theta: &Theta, out: &mut [f64]) {
        let h = theta.0[0];
        let (y, z) = (x[0], x[1]);
        let (ey, direct, reflected) = self.parts(x, h);
        let a = self.amplitude();
        let sz2 = self.sigma_z.powi(2);
        out[0] = a * ey * (direct + reflected) * y / self.sigma_y.powi(2);
        out[1] = a * ey * ((z - h) / sz2 * direct + (z + h) / sz2 * reflected);
    }

    fn optimum_guess(&self, theta: &Theta) -> Vec<f64> {
        vec![0.0, theta.0[0]]
    }

    fn descriptor(&self) -> serde_json::Value {
        json!({
            "kind": self.kind(),
            "Q": self.q,
            "U": self.u,
            "sigma_y": self.sigma_y,
            "sigma_z": self.sigma_z,
        })
    }
}
