use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::grid::check_horizon;
use super::{slice_gradient, GradientField, GridSpec, Lattice, SolveDiagnostics, ValueGrid, MAX_GRID_MODES};
use crate::cost::CostSpec;
use crate::error::{Error, Result};
use crate::galerkin::GalerkinSystem;
use crate::hamiltonian::{hamiltonian_term, SaturationBound};
use crate::ou::ou_transition;
use crate::quadrature::GaussHermite;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PicardOptions {
    pub max_iter: usize,
    /// Stop once the sup-norm change between iterates falls below this.
    pub tol: f64,
    /// Gauss–Hermite order per mode for `R_t`.
    #[serde(default = "default_order")]
    pub quadrature_order: usize,
}

fn default_order() -> usize {
    16
}

impl Default for PicardOptions {
    fn default() -> Self {
        Self {
            max_iter: 50,
            tol: 1e-6,
            quadrature_order: default_order(),
        }
    }
}

/// Product Gauss–Hermite rule for the law of `Z(τ, x) - e^{τA} x`.
struct LagRule {
    decay: Vec<f64>,
    weights: Vec<f64>,
    /// Flattened `m`-vectors of node offsets `σ ⊙ ξ`.
    offsets: Vec<f64>,
}

impl LagRule {
    fn new(sys: &GalerkinSystem, tau: f64, gh: &GaussHermite) -> Result<Self> {
        let tr = ou_transition(sys, tau)?;
        let (weights, offsets) = gh.tensor_rule(&tr.std_dev());
        Ok(Self {
            decay: tr.mean_decay,
            weights,
            offsets,
        })
    }

    /// `E f(e^{τA} x + σ ⊙ ξ)`.
    fn expect(&self, x: &[f64], mut f: impl FnMut(&[f64]) -> f64) -> f64 {
        let m = x.len();
        let mut y = [0.0; MAX_GRID_MODES];
        let mut total = 0.0;
        for (w, off) in self.weights.iter().zip(self.offsets.chunks(m)) {
            for k in 0..m {
                y[k] = self.decay[k] * x[k] + off[k];
            }
            total += w * f(&y[..m]);
        }
        total
    }
}

/// Integrand `(b(y), u_x) - F(B* u_x) + Φ(y)` with `u_x` interpolated from
/// one gradient slice.
struct Integrand<'a> {
    sys: &'a GalerkinSystem,
    cost: &'a CostSpec,
    r: f64,
    lat: &'a Lattice,
}

impl Integrand<'_> {
    fn eval(&self, grads: Option<&[f64]>, y: &[f64]) -> f64 {
        let m = y.len();
        let phi = self.cost.running.eval(y);
        let Some(grads) = grads else {
            return phi;
        };
        let mut g = [0.0; MAX_GRID_MODES];
        self.lat.interpolate(grads, m, y, &mut g);
        let mut by = [0.0; MAX_GRID_MODES];
        self.sys.bilinear_into(y, y, &mut by[..m]);
        let transport: f64 = (0..m).map(|k| by[k] * g[k]).sum();
        transport - hamiltonian_term(self.sys, &g[..m], self.r) + phi
    }
}

struct MildMap<'a> {
    integrand: Integrand<'a>,
    rules: Vec<LagRule>,
    tau: f64,
}

impl MildMap<'_> {
    /// Right-hand side of the mild equation at slice `j`, node `x`, with the
    /// gradient slices `grads` (or zero gradient when `None`).
    fn at(&self, j: usize, x: &[f64], grads: Option<&[Vec<f64>]>) -> f64 {
        let cost = self.integrand.cost;
        let mut u = self.rules[j].expect(x, |y| cost.terminal.eval(y));
        if j == 0 {
            return u;
        }
        let mut integral = 0.0;
        for i in 0..=j {
            let c = if i == 0 || i == j { 0.5 } else { 1.0 };
            let slice = grads.map(|g| g[i].as_slice());
            integral += c * self.rules[j - i].expect(x, |y| self.integrand.eval(slice, y));
        }
        u += self.tau * integral;
        u
    }
}

fn build_map<'a>(
    sys: &'a GalerkinSystem,
    cost: &'a CostSpec,
    r: f64,
    lat: &'a Lattice,
    slices: usize,
    tau: f64,
    order: usize,
) -> Result<MildMap<'a>> {
    let gh = GaussHermite::new(order)?;
    let rules = (0..=slices)
        .map(|l| LagRule::new(sys, l as f64 * tau, &gh))
        .collect::<Result<Vec<_>>>()?;
    Ok(MildMap {
        integrand: Integrand { sys, cost, r, lat },
        rules,
        tau,
    })
}

/// Picard iteration of the mild form on the slices of `spec`.
pub fn solve_hjb_mild(
    sys: &GalerkinSystem,
    cost: &CostSpec,
    r: SaturationBound,
    t: f64,
    spec: &GridSpec,
    picard: &PicardOptions,
) -> Result<ValueGrid> {
    check_horizon(t)?;
    if picard.max_iter == 0 {
        return Err(Error::InvalidParameter {
            name: "max_iter",
            value: 0.0,
            constraint: "must be >= 1".into(),
        });
    }
    let half_width = spec.resolve_half_width(sys)?;
    let lat = Lattice::new(spec.points_per_axis, half_width);
    let slices = spec.time_slices;
    let tau = t / slices as f64;
    let map = build_map(sys, cost, r.value(), &lat, slices, tau, picard.quadrature_order)?;
    let nodes: Vec<Vec<f64>> = (0..lat.len()).map(|i| lat.node(i)).collect();

    let sweep = |grads: Option<&[Vec<f64>]>| -> Vec<Vec<f64>> {
        (0..=slices)
            .map(|j| nodes.par_iter().map(|x| map.at(j, x, grads)).collect())
            .collect()
    };

    let mut u = sweep(None);
    let mut residuals = Vec::new();
    let mut converged = false;
    for _ in 0..picard.max_iter {
        let grads: Vec<Vec<f64>> = u.iter().map(|s| slice_gradient(&lat, s)).collect();
        let next = sweep(Some(&grads));
        let res = next
            .iter()
            .flatten()
            .zip(u.iter().flatten())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, |acc: f64, d| if d.is_nan() { f64::NAN } else { acc.max(d) });
        residuals.push(res);
        u = next;
        if !res.is_finite() {
            break;
        }
        if res < picard.tol {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::PicardDiverged {
            iterations: residuals.len(),
            residuals,
        });
    }
    Ok(ValueGrid {
        lattice: lat,
        horizon: t,
        times: (0..=slices).map(|n| n as f64 * tau).collect(),
        values: u,
        diagnostics: SolveDiagnostics {
            method: "mild".into(),
            picard_residuals: residuals,
            ..Default::default()
        },
    })
}

/// One application of the mild map at slice `j` and an arbitrary state `x`,
/// using the supplied gradient field for `u_x`.
pub fn mild_map_at(
    sys: &GalerkinSystem,
    cost: &CostSpec,
    r: SaturationBound,
    grads: &GradientField,
    j: usize,
    x: &[f64],
    quadrature_order: usize,
) -> Result<f64> {
    let slices = grads.times.len() - 1;
    if j > slices {
        return Err(Error::InvalidParameter {
            name: "slice",
            value: j as f64,
            constraint: format!("must be <= {slices}"),
        });
    }
    let tau = grads.horizon / slices as f64;
    let map = build_map(sys, cost, r.value(), &grads.lattice, slices, tau, quadrature_order)?;
    Ok(map.at(j, x, Some(&grads.grads)))
}
