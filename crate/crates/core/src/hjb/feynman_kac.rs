use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{gradient, GradientField, ValueGrid, MAX_GRID_MODES};
use crate::cost::CostSpec;
use crate::error::{check_dim, positive, Error, Result};
use crate::field::{weighted_norm_sq, SpectralField};
use crate::galerkin::GalerkinSystem;
use crate::hamiltonian::{hamiltonian_term, SaturationBound};
use crate::rng::path_rng;
use crate::sde::{Scheme, Stepper};
use crate::stats::{self, Estimate};

/// Weights below this count as underflowed.
const WEIGHT_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FkOptions {
    pub n_paths: usize,
    pub dt: f64,
    pub seed: u64,
}

/// `max(2 c ‖u_x‖, floor)` with `c` the empirical bilinear constant and
/// `‖u_x‖` the largest gradient norm at the probe states over all slices.
pub fn default_killing_rate(bilinear_constant: f64, grads: &GradientField, probes: &[Vec<f64>], floor: f64) -> f64 {
    let m = grads.m();
    let mut sup = 0.0f64;
    let mut g = [0.0; MAX_GRID_MODES];
    for x in probes {
        for &t in &grads.times {
            grads.grad_at(t, x, &mut g[..m]);
            sup = sup.max(g[..m].iter().map(|v| v * v).sum::<f64>().sqrt());
        }
    }
    (2.0 * bilinear_constant * sup).max(floor)
}

/// Monte Carlo evaluation at `(t, x)` of
///
/// ```text
/// S_t φ(x) + ∫_0^t S_{t-s}[K |A·|² u(s) - F(B* u_x(s)) + Φ](x) ds,
/// S_τ f(x) = E[exp(-K ∫_0^τ |A Y|²) f(Y(τ))],
/// ```
///
/// along uncontrolled paths `Y` started at `x`, with `u` and `u_x` taken from
/// `value_prev`.
#[allow(clippy::too_many_arguments)]
pub fn feynman_kac_value(
    sys: &GalerkinSystem,
    cost: &CostSpec,
    r: SaturationBound,
    k: f64,
    t: f64,
    x: &SpectralField,
    opts: &FkOptions,
    value_prev: &ValueGrid,
) -> Result<Estimate> {
    check_dim(sys.m(), x.dim())?;
    check_dim(sys.m(), value_prev.m())?;
    positive("K", k)?;
    positive("dt", opts.dt)?;
    if !(t >= 0.0 && t <= value_prev.horizon + 1e-12) {
        return Err(Error::HorizonTooShort {
            value_t: value_prev.horizon,
            sim_t: t,
        });
    }
    if opts.n_paths < 2 {
        return Err(Error::InvalidParameter {
            name: "n_paths",
            value: opts.n_paths as f64,
            constraint: "must be >= 2".into(),
        });
    }
    let m = sys.m();
    let grads = gradient(value_prev);
    let n_steps = ((t / opts.dt).ceil() as usize).max(1);
    let dt = t / n_steps as f64;
    let stepper = Stepper::new(sys, Scheme::ExponentialEuler, dt);
    let lam = sys.lambdas();
    let zero = vec![0.0; m];

    let samples: Vec<(f64, bool)> = (0..opts.n_paths as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = path_rng(opts.seed, i);
            let mut y = x.as_slice().to_vec();
            let mut scratch = vec![0.0; m];
            let mut g = [0.0; MAX_GRID_MODES];
            let mut log_w = 0.0;
            let mut a_prev = weighted_norm_sq(&y, lam, 2.0);
            let source = |sigma: f64, y: &[f64], g: &mut [f64]| {
                let s = t - sigma;
                grads.grad_at(s, y, g);
                k * weighted_norm_sq(y, lam, 2.0) * value_prev.value_at(s, y)
                    - hamiltonian_term(sys, g, r.value())
                    + cost.running.eval(y)
            };
            let mut integral = 0.5 * source(0.0, &y, &mut g[..m]);
            for n in 1..=n_steps {
                stepper.step(&mut y, &zero, &mut rng, &mut scratch);
                let a = weighted_norm_sq(&y, lam, 2.0);
                log_w -= k * 0.5 * dt * (a_prev + a);
                a_prev = a;
                let w = log_w.exp();
                let c = if n == n_steps { 0.5 } else { 1.0 };
                integral += c * w * source(n as f64 * dt, &y, &mut g[..m]);
            }
            let w = log_w.exp();
            (w * cost.terminal.eval(&y) + dt * integral, w >= WEIGHT_FLOOR)
        })
        .collect();
    if samples.iter().all(|(_, alive)| !alive) {
        return Err(Error::WeightUnderflow { k });
    }
    let vals: Vec<f64> = samples.into_iter().map(|(v, _)| v).collect();
    Ok(stats::estimate(&vals))
}
