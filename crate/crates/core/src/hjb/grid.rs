use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{GridSpec, Lattice, SolveDiagnostics, ValueGrid, MAX_GRID_MODES};
use crate::cost::CostSpec;
use crate::error::{positive, Error, Result};
use crate::galerkin::GalerkinSystem;
use crate::hamiltonian::{f_of_norm, SaturationBound};

/// Discretization of the transport term `(Ax + b(x), u_x)`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriftScheme {
    /// Central differences where the cell Péclet condition keeps the stencil
    /// monotone, first-order upwinding elsewhere.
    #[default]
    Hybrid,
    /// First-order upwinding in the drift sign everywhere.
    Upwind,
}

pub(crate) struct NodeData {
    pub drift: Vec<f64>,
    pub running: Vec<f64>,
}

pub(crate) fn node_data(sys: &GalerkinSystem, lat: &Lattice, cost: &CostSpec) -> NodeData {
    let m = lat.m;
    let mut drift = vec![0.0; lat.len() * m];
    let mut running = vec![0.0; lat.len()];
    for flat in 0..lat.len() {
        let x = lat.node(flat);
        sys.drift_into(&x, &mut drift[flat * m..(flat + 1) * m]);
        running[flat] = cost.running.eval(&x);
    }
    NodeData { drift, running }
}

/// `1 / max_node Σ_k (q_k / h_k² + |f_k| / h_k)`: the largest explicit step
/// keeping the diffusion and transport part of the stencil monotone.
pub fn stability_limit(sys: &GalerkinSystem, lat: &Lattice) -> f64 {
    let m = lat.m;
    let mut worst = 0.0f64;
    let mut f = vec![0.0; m];
    for flat in 0..lat.len() {
        let x = lat.node(flat);
        sys.drift_into(&x, &mut f);
        let rate: f64 = (0..m)
            .map(|k| sys.effective_q(k) / (lat.h[k] * lat.h[k]) + f[k].abs() / lat.h[k])
            .sum();
        worst = worst.max(rate);
    }
    if worst == 0.0 {
        f64::INFINITY
    } else {
        1.0 / worst
    }
}

struct Stencil<'a> {
    sys: &'a GalerkinSystem,
    lat: &'a Lattice,
    data: &'a NodeData,
    r: f64,
    dt: f64,
    scheme: DriftScheme,
}

/// Outcome of one node update: the new value, whether any stencil weight was
/// negative and whether upwinding was used.
struct Update(f64, bool, bool);

impl Stencil<'_> {
    fn update(&self, old: &[f64], flat: usize) -> Update {
        let lat = self.lat;
        let m = lat.m;
        let n = lat.n;
        let u0 = old[flat];
        let f = &self.data.drift[flat * m..(flat + 1) * m];
        let bs = self.sys.b_spectrum();

        let mut um = [0.0; MAX_GRID_MODES];
        let mut up = [0.0; MAX_GRID_MODES];
        let mut face = [0i8; MAX_GRID_MODES];
        let mut p = [0.0; MAX_GRID_MODES];
        let mut rem = flat;
        for k in (0..m).rev() {
            let i = rem % n;
            rem /= n;
            let s = lat.stride(k);
            let h = lat.h[k];
            // Linear extrapolation through the face: zero second difference.
            if i == 0 {
                up[k] = old[flat + s];
                um[k] = 2.0 * u0 - up[k];
                face[k] = -1;
            } else if i == n - 1 {
                um[k] = old[flat - s];
                up[k] = 2.0 * u0 - um[k];
                face[k] = 1;
            } else {
                um[k] = old[flat - s];
                up[k] = old[flat + s];
            }
            p[k] = (up[k] - um[k]) / (2.0 * h);
        }

        // Hamiltonian F(B* p) and its p-derivative w = B D_pF(B* p).
        let mut bp2 = 0.0;
        for k in 0..m {
            bp2 += (bs[k] * p[k]).powi(2);
        }
        let bp = bp2.sqrt();
        let ham = f_of_norm(bp, self.r);
        let sat = if bp <= self.r { 1.0 } else { self.r / bp };

        let mut rhs = self.data.running[flat] - ham;
        let mut centre = 1.0;
        let mut negative = false;
        let mut upwinded = false;
        for k in 0..m {
            let h = lat.h[k];
            let q = self.sys.effective_q(k);
            let w = bs[k] * bs[k] * p[k] * sat;
            let fk = f[k];
            if face[k] != 0 {
                // Both neighbours collapse to the one-sided difference
                // towards the interior.
                rhs += fk * p[k];
                let inward = if face[k] > 0 { -(fk - w) / h } else { (fk - w) / h };
                negative |= inward < 0.0;
                centre -= self.dt * inward;
                continue;
            }
            let diff = 0.5 * q / (h * h);
            rhs += diff * (up[k] - 2.0 * u0 + um[k]);
            let central_ok = h * fk.abs() <= q && h * (fk - w).abs() <= q;
            let (w_plus, w_minus, c) = if self.scheme == DriftScheme::Hybrid && central_ok {
                rhs += fk * p[k];
                (
                    diff + (fk - w) / (2.0 * h),
                    diff - (fk - w) / (2.0 * h),
                    -2.0 * diff,
                )
            } else {
                upwinded = true;
                if fk > 0.0 {
                    rhs += fk * (up[k] - u0) / h;
                    (
                        diff + fk / h - w / (2.0 * h),
                        diff + w / (2.0 * h),
                        -2.0 * diff - fk / h,
                    )
                } else {
                    rhs += fk * (u0 - um[k]) / h;
                    (
                        diff - w / (2.0 * h),
                        diff - fk / h + w / (2.0 * h),
                        -2.0 * diff + fk / h,
                    )
                }
            };
            negative |= w_plus < 0.0 || w_minus < 0.0;
            centre += self.dt * c;
        }
        negative |= centre < 0.0;
        Update(u0 + self.dt * rhs, negative, upwinded)
    }
}

pub(crate) fn check_horizon(t: f64) -> Result<f64> {
    positive("T", t)
}

/// Explicit forward march of the HJB equation from `u(0) = φ` to `u(T)`.
pub fn solve_hjb_grid(
    sys: &GalerkinSystem,
    cost: &CostSpec,
    r: SaturationBound,
    t: f64,
    spec: &GridSpec,
) -> Result<ValueGrid> {
    check_horizon(t)?;
    let half_width = spec.resolve_half_width(sys)?;
    let lat = Lattice::new(spec.points_per_axis, half_width);
    let slices = spec.time_slices;
    let slice_dt = t / slices as f64;
    let dt_max = stability_limit(sys, &lat);
    let substeps = match spec.march_dt {
        Some(dt) => {
            positive("march_dt", dt)?;
            if dt > dt_max {
                return Err(Error::StabilityViolation { dt, dt_max });
            }
            (slice_dt / dt).ceil() as usize
        }
        // A power of two keeps the step dyadic whenever the slice spacing is,
        // so sums of steps are exact.
        None => ((slice_dt / (0.5 * dt_max)).ceil().max(1.0) as usize).next_power_of_two(),
    };
    let dt = slice_dt / substeps as f64;

    let data = node_data(sys, &lat, cost);
    let stencil = Stencil {
        sys,
        lat: &lat,
        data: &data,
        r: r.value(),
        dt,
        scheme: spec.drift_scheme,
    };

    let mut u: Vec<f64> = (0..lat.len()).map(|i| cost.terminal.eval(&lat.node(i))).collect();
    let mut values = Vec::with_capacity(slices + 1);
    values.push(u.clone());
    let mut diag = SolveDiagnostics {
        method: "grid".into(),
        march_dt: Some(dt),
        dt_max: Some(dt_max),
        substeps_per_slice: Some(substeps),
        ..Default::default()
    };
    for slice in 1..=slices {
        for _ in 0..substeps {
            let updates: Vec<Update> = (0..lat.len())
                .into_par_iter()
                .map(|flat| stencil.update(&u, flat))
                .collect();
            for (dst, Update(v, neg, upw)) in u.iter_mut().zip(updates) {
                *dst = v;
                diag.non_monotone_updates += neg as u64;
                diag.upwind_updates += upw as u64;
            }
            if let Some(bad) = u.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    slice,
                    node: lat.multi_index(bad),
                });
            }
        }
        values.push(u.clone());
    }
    Ok(ValueGrid {
        lattice: lat,
        horizon: t,
        times: (0..=slices).map(|n| n as f64 * slice_dt).collect(),
        values,
        diagnostics: diag,
    })
}
