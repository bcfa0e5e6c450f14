//! Reference solution of the linear-quadratic problem.
//!
//! With the bilinear term off, an unsaturated Hamiltonian and costs
//! `Φ = Σ M_k x_k²`, `φ = Σ N_k x_k²`, the ansatz `u = Σ p_k(t) x_k² + ρ(t)`
//! solves the HJB equation when
//!
//! ```text
//! p_k' = -2 λ_k p_k - 2 β_k² p_k² + M_k,   p_k(0) = N_k,
//! ρ'   = Σ q_k p_k,                         ρ(0) = 0,
//! ```
//!
//! with `β_k` the eigenvalues of `B`. The optimal feedback is
//! `z*(t) = -2 B P(T - t) X(t)` as long as `|B* u_x| ≤ R`.

use serde::{Deserialize, Serialize};

use crate::cost::CostSpec;
use crate::error::{positive, Error, Result};
use crate::galerkin::GalerkinSystem;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LqProblem {
    pub lambdas: Vec<f64>,
    pub betas: Vec<f64>,
    pub q: Vec<f64>,
    pub running: Vec<f64>,
    pub terminal: Vec<f64>,
}

impl LqProblem {
    /// Extracts the diagonal problem; requires quadratic costs and the
    /// bilinear term switched off.
    pub fn from_system(sys: &GalerkinSystem, cost: &CostSpec) -> Result<Self> {
        if sys.bilinear_enabled() && !sys.tensor().is_zero() {
            return Err(Error::Unsupported(
                "the quadratic ansatz needs the bilinear term switched off".into(),
            ));
        }
        let (Some(running), Some(terminal)) = (cost.running.quadratic_diag(), cost.terminal.quadratic_diag()) else {
            return Err(Error::Unsupported(
                "the quadratic ansatz needs quadratic running and terminal costs".into(),
            ));
        };
        Ok(Self {
            lambdas: sys.lambdas().to_vec(),
            betas: sys.b_spectrum().to_vec(),
            q: (0..sys.m()).map(|k| sys.effective_q(k)).collect(),
            running,
            terminal,
        })
    }

    fn rhs(&self, p: &[f64], out: &mut [f64]) {
        let m = self.lambdas.len();
        for k in 0..m {
            let b2 = self.betas[k] * self.betas[k];
            out[k] = -2.0 * self.lambdas[k] * p[k] - 2.0 * b2 * p[k] * p[k] + self.running[k];
        }
        out[m] = (0..m).map(|k| self.q[k] * p[k]).sum();
    }

    /// Classical RK4 on `(p, ρ)` with `steps` uniform steps over `[0, t]`.
    pub fn solve(&self, t: f64, steps: usize) -> Result<RiccatiSolution> {
        positive("T", t)?;
        if steps == 0 {
            return Err(Error::InvalidParameter {
                name: "steps",
                value: 0.0,
                constraint: "must be >= 1".into(),
            });
        }
        let m = self.lambdas.len();
        let dt = t / steps as f64;
        let mut y: Vec<f64> = self.terminal.iter().copied().chain([0.0]).collect();
        let mut states = Vec::with_capacity(steps + 1);
        states.push(y.clone());
        let (mut k1, mut k2, mut k3, mut k4) = (vec![0.0; m + 1], vec![0.0; m + 1], vec![0.0; m + 1], vec![0.0; m + 1]);
        let mut tmp = vec![0.0; m + 1];
        for _ in 0..steps {
            self.rhs(&y, &mut k1);
            for i in 0..=m {
                tmp[i] = y[i] + 0.5 * dt * k1[i];
            }
            self.rhs(&tmp, &mut k2);
            for i in 0..=m {
                tmp[i] = y[i] + 0.5 * dt * k2[i];
            }
            self.rhs(&tmp, &mut k3);
            for i in 0..=m {
                tmp[i] = y[i] + dt * k3[i];
            }
            self.rhs(&tmp, &mut k4);
            for i in 0..=m {
                y[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
            states.push(y.clone());
        }
        Ok(RiccatiSolution {
            horizon: t,
            dt,
            betas: self.betas.clone(),
            states,
        })
    }
}

/// `(p(t_n), ρ(t_n))` on a fine uniform grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiccatiSolution {
    pub horizon: f64,
    pub dt: f64,
    betas: Vec<f64>,
    states: Vec<Vec<f64>>,
}

impl RiccatiSolution {
    /// `(p(t), ρ(t))`, linearly interpolated between integration steps.
    pub fn state_at(&self, t: f64) -> Vec<f64> {
        let last = self.states.len() - 1;
        let s = (t / self.dt).clamp(0.0, last as f64);
        let lo = (s.floor() as usize).min(last.saturating_sub(1));
        let hi = (lo + 1).min(last);
        let w = s - lo as f64;
        self.states[lo]
            .iter()
            .zip(&self.states[hi])
            .map(|(a, b)| (1.0 - w) * a + w * b)
            .collect()
    }

    pub fn p(&self, t: f64) -> Vec<f64> {
        let mut s = self.state_at(t);
        s.pop();
        s
    }

    pub fn rho(&self, t: f64) -> f64 {
        *self.state_at(t).last().expect("state has rho")
    }

    /// `u(t, x) = Σ p_k x_k² + ρ`.
    pub fn value(&self, t: f64, x: &[f64]) -> f64 {
        let s = self.state_at(t);
        let m = s.len() - 1;
        (0..m).map(|k| s[k] * x[k] * x[k]).sum::<f64>() + s[m]
    }

    /// `u_x(t, x) = 2 P x`.
    pub fn gradient(&self, t: f64, x: &[f64]) -> Vec<f64> {
        self.p(t).iter().zip(x).map(|(p, v)| 2.0 * p * v).collect()
    }

    /// Optimal feedback at forward time `t` of a problem with horizon `T`:
    /// `-2 B P(T - t) x`.
    pub fn optimal_control(&self, horizon: f64, t: f64, x: &[f64]) -> Vec<f64> {
        self.gradient(horizon - t, x)
            .iter()
            .zip(&self.betas)
            .map(|(g, b)| -b * g)
            .collect()
    }
}
