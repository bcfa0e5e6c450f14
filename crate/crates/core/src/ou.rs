//! Exact transitions of the linear dynamics `dZ = AZ dt + Q^{1/2} dW` and the
//! associated semigroup `R_t φ(x) = E[φ(Z(t, x))]`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::field::SpectralField;
use crate::galerkin::GalerkinSystem;
use crate::quadrature::GaussHermite;
use crate::rng::standard_normal;
use crate::stats;

/// Per-mode law of `Z(t, x)`: mean `e^{-λ_k t} x_k`, variance `v_k(t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OUTransition {
    pub t: f64,
    pub mean_decay: Vec<f64>,
    pub variance: Vec<f64>,
}

impl OUTransition {
    pub fn std_dev(&self) -> Vec<f64> {
        self.variance.iter().map(|v| v.sqrt()).collect()
    }

    pub fn mean(&self, x: &[f64]) -> Vec<f64> {
        self.mean_decay.iter().zip(x).map(|(d, v)| d * v).collect()
    }
}

/// `q (1 - e^{-2λt}) / (2λ)`, switching to the series `q t (1 - λt)` when
/// `λt < 1e-8`.
pub fn ou_variance(lambda: f64, q: f64, t: f64) -> f64 {
    let z = lambda * t;
    if z < 1e-8 {
        q * t * (1.0 - z)
    } else {
        q * -(-2.0 * z).exp_m1() / (2.0 * lambda)
    }
}

pub fn ou_transition(sys: &GalerkinSystem, t: f64) -> Result<OUTransition> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "t",
            value: t,
            constraint: "must be finite and >= 0".into(),
        });
    }
    let lam = sys.lambdas();
    Ok(OUTransition {
        t,
        mean_decay: lam.iter().map(|l| (-l * t).exp()).collect(),
        variance: (0..sys.m())
            .map(|k| ou_variance(lam[k], sys.effective_q(k), t))
            .collect(),
    })
}

/// One exact draw of `Z(t, x)`.
pub fn sample_ou<R: Rng + ?Sized>(
    sys: &GalerkinSystem,
    x: &SpectralField,
    t: f64,
    rng: &mut R,
) -> Result<SpectralField> {
    check_dim(sys.m(), x.dim())?;
    let tr = ou_transition(sys, t)?;
    let out = (0..sys.m())
        .map(|k| {
            let mean = tr.mean_decay[k] * x[k];
            if tr.variance[k] == 0.0 {
                mean
            } else {
                mean + tr.variance[k].sqrt() * standard_normal(rng)
            }
        })
        .collect();
    Ok(SpectralField::from_vec(out))
}

pub(crate) fn check_time_grid(grid: &[f64]) -> Result<()> {
    if grid.first() != Some(&0.0) {
        return Err(Error::InvalidTimeGrid { index: 0 });
    }
    if let Some(i) = grid.windows(2).position(|w| !(w[1] > w[0]) || !w[1].is_finite()) {
        return Err(Error::InvalidTimeGrid { index: i + 1 });
    }
    Ok(())
}

/// `Z(t_n, 0)` on the grid, built step by step from exact transitions.
pub fn stochastic_convolution_path<R: Rng + ?Sized>(
    sys: &GalerkinSystem,
    time_grid: &[f64],
    rng: &mut R,
) -> Result<Vec<SpectralField>> {
    check_time_grid(time_grid)?;
    let m = sys.m();
    let mut out = Vec::with_capacity(time_grid.len());
    let mut z = vec![0.0; m];
    out.push(SpectralField::zeros(m));
    for w in time_grid.windows(2) {
        let tr = ou_transition(sys, w[1] - w[0])?;
        for k in 0..m {
            z[k] = tr.mean_decay[k] * z[k];
            if tr.variance[k] > 0.0 {
                z[k] += tr.variance[k].sqrt() * standard_normal(rng);
            }
        }
        out.push(SpectralField::from_vec(z.clone()));
    }
    Ok(out)
}

/// `E |(-A)^s Z(t, 0)|² = Σ λ_k^{2s} v_k(t)`.
pub fn expected_fractional_energy(sys: &GalerkinSystem, s: f64, t: f64) -> Result<f64> {
    let tr = ou_transition(sys, t)?;
    Ok(sys
        .lambdas()
        .iter()
        .zip(&tr.variance)
        .map(|(l, v)| l.powf(2.0 * s) * v)
        .sum())
}

/// How `R_t` is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RMode {
    MonteCarlo { n_samples: usize },
    /// Tensor Gauss–Hermite rule, available for `m ≤ 3`.
    Quadrature { order: usize },
}

impl Default for RMode {
    fn default() -> Self {
        RMode::Quadrature { order: 16 }
    }
}

/// `R_t f(x)` with its standard error (zero in quadrature mode).
pub fn apply_r<R: Rng + ?Sized>(
    sys: &GalerkinSystem,
    test_fn: impl Fn(&[f64]) -> f64,
    t: f64,
    x: &SpectralField,
    mode: RMode,
    rng: &mut R,
) -> Result<stats::Estimate> {
    check_dim(sys.m(), x.dim())?;
    let tr = ou_transition(sys, t)?;
    if t == 0.0 {
        return Ok(stats::Estimate {
            mean: test_fn(x.as_slice()),
            std_error: 0.0,
        });
    }
    let mean = tr.mean(x.as_slice());
    let std = tr.std_dev();
    match mode {
        RMode::MonteCarlo { n_samples } => {
            if n_samples < 2 {
                return Err(Error::InvalidParameter {
                    name: "n_samples",
                    value: n_samples as f64,
                    constraint: "must be >= 2".into(),
                });
            }
            let mut y = vec![0.0; sys.m()];
            let values: Vec<f64> = (0..n_samples)
                .map(|_| {
                    for k in 0..y.len() {
                        y[k] = mean[k] + std[k] * standard_normal(rng);
                    }
                    test_fn(&y)
                })
                .collect();
            Ok(stats::estimate(&values))
        }
        RMode::Quadrature { order } => {
            if sys.m() > 3 {
                return Err(Error::GridTooLarge { m: sys.m() });
            }
            let gh = GaussHermite::new(order)?;
            Ok(stats::Estimate {
                mean: gh.expect(&mean, &std, |p| test_fn(p)),
                std_error: 0.0,
            })
        }
    }
}
