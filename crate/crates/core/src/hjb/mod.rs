//! The finite-dimensional HJB equation
//!
//! ```text
//! u_t = ½ Tr[Q u_xx] + (Ax + b(x), u_x) - F(B* u_x) + Φ,   u(0) = φ,
//! ```
//!
//! solved on a truncated box by an explicit grid march, by Picard iteration
//! of the mild form, and evaluated pointwise by a Feynman–Kac average.

mod bounds;
mod feynman_kac;
mod grid;
mod mild;
pub mod riccati;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::galerkin::GalerkinSystem;

pub use bounds::{assert_value_bounds, BoundReport};
pub use feynman_kac::{default_killing_rate, feynman_kac_value, FkOptions};
pub use grid::{solve_hjb_grid, stability_limit, DriftScheme};
pub use mild::{mild_map_at, solve_hjb_mild, PicardOptions};

/// Largest mode count the grid solvers accept.
pub const MAX_GRID_MODES: usize = 3;

/// Discretization of `[0, T] × box`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    /// Odd number of nodes per axis.
    pub points_per_axis: usize,
    /// Box half-width per mode; `None` uses `4 sqrt(q_k / (2 λ_k))`.
    #[serde(default)]
    pub half_width: Option<Vec<f64>>,
    /// Number of stored time slices after `t = 0`.
    pub time_slices: usize,
    /// Explicit march step; `None` splits each slice into the smallest power
    /// of two of substeps no longer than half the stability limit.
    #[serde(default)]
    pub march_dt: Option<f64>,
    #[serde(default)]
    pub drift_scheme: DriftScheme,
}

impl GridSpec {
    pub fn new(points_per_axis: usize, time_slices: usize) -> Self {
        Self {
            points_per_axis,
            half_width: None,
            time_slices,
            march_dt: None,
            drift_scheme: DriftScheme::default(),
        }
    }

    /// Resolves the box half-widths for `sys`, validating the grid settings.
    pub fn resolve_half_width(&self, sys: &GalerkinSystem) -> Result<Vec<f64>> {
        let m = sys.m();
        if m > MAX_GRID_MODES {
            return Err(Error::GridTooLarge { m });
        }
        if self.points_per_axis < 3 || self.points_per_axis % 2 == 0 {
            return Err(Error::InvalidParameter {
                name: "points_per_axis",
                value: self.points_per_axis as f64,
                constraint: "must be odd and >= 3".into(),
            });
        }
        if self.time_slices == 0 {
            return Err(Error::InvalidParameter {
                name: "time_slices",
                value: 0.0,
                constraint: "must be >= 1".into(),
            });
        }
        let l = match &self.half_width {
            Some(l) => {
                if l.len() != m {
                    return Err(Error::DimensionMismatch {
                        expected: m,
                        got: l.len(),
                    });
                }
                l.clone()
            }
            None => default_half_width(sys),
        };
        if let Some(&bad) = l.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
            return Err(Error::InvalidParameter {
                name: "half_width",
                value: bad,
                constraint: "must be finite and > 0 (give it explicitly when noise is off)".into(),
            });
        }
        Ok(l)
    }
}

/// Four stationary standard deviations of the linear dynamics per mode.
pub fn default_half_width(sys: &GalerkinSystem) -> Vec<f64> {
    (0..sys.m())
        .map(|k| 4.0 * (sys.effective_q(k) / (2.0 * sys.lambdas()[k])).sqrt())
        .collect()
}

/// Tensor-product node layout shared by value and gradient grids. Flat node
/// index `Σ i_k n^{m-1-k}`: the first mode varies slowest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lattice {
    pub m: usize,
    pub n: usize,
    pub half_width: Vec<f64>,
    pub h: Vec<f64>,
}

impl Lattice {
    pub fn new(n: usize, half_width: Vec<f64>) -> Self {
        let h = half_width.iter().map(|l| 2.0 * l / (n - 1) as f64).collect();
        Self {
            m: half_width.len(),
            n,
            half_width,
            h,
        }
    }

    pub fn len(&self) -> usize {
        self.n.pow(self.m as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn stride(&self, k: usize) -> usize {
        self.n.pow((self.m - 1 - k) as u32)
    }

    pub fn multi_index(&self, mut flat: usize) -> Vec<usize> {
        let mut idx = vec![0; self.m];
        for k in (0..self.m).rev() {
            idx[k] = flat % self.n;
            flat /= self.n;
        }
        idx
    }

    pub fn flat(&self, idx: &[usize]) -> usize {
        idx.iter().fold(0, |acc, &i| acc * self.n + i)
    }

    pub fn coord(&self, k: usize, i: usize) -> f64 {
        -self.half_width[k] + i as f64 * self.h[k]
    }

    pub fn node(&self, flat: usize) -> Vec<f64> {
        self.multi_index(flat)
            .iter()
            .enumerate()
            .map(|(k, &i)| self.coord(k, i))
            .collect()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(&self.half_width)
            .all(|(v, l)| v.abs() <= *l)
    }

    /// Index of the node nearest to `x` (clamped to the box).
    pub fn nearest(&self, x: &[f64]) -> usize {
        let idx: Vec<usize> = (0..self.m)
            .map(|k| {
                let s = ((x[k] + self.half_width[k]) / self.h[k]).round();
                s.clamp(0.0, (self.n - 1) as f64) as usize
            })
            .collect();
        self.flat(&idx)
    }

    /// Multilinear interpolation of the per-node `width`-vectors in `data`,
    /// clamping `x` to the box. Returns false when clamping occurred.
    pub fn interpolate(&self, data: &[f64], width: usize, x: &[f64], out: &mut [f64]) -> bool {
        let m = self.m;
        let mut base = [0usize; MAX_GRID_MODES];
        let mut frac = [0.0f64; MAX_GRID_MODES];
        let mut inside = true;
        for k in 0..m {
            let s = (x[k] + self.half_width[k]) / self.h[k];
            let top = (self.n - 1) as f64;
            let s = if s < 0.0 {
                inside = false;
                0.0
            } else if s > top {
                inside = false;
                top
            } else if s.is_nan() {
                inside = false;
                0.0
            } else {
                s
            };
            let i = (s.floor() as usize).min(self.n - 2);
            base[k] = i;
            frac[k] = s - i as f64;
        }
        out[..width].iter_mut().for_each(|v| *v = 0.0);
        for corner in 0..(1usize << m) {
            let mut w = 1.0;
            let mut flat = 0;
            for k in 0..m {
                let bit = (corner >> k) & 1;
                w *= if bit == 1 { frac[k] } else { 1.0 - frac[k] };
                flat = flat * self.n + base[k] + bit;
            }
            if w == 0.0 {
                continue;
            }
            let row = &data[flat * width..(flat + 1) * width];
            for (o, v) in out[..width].iter_mut().zip(row) {
                *o += w * v;
            }
        }
        inside
    }
}

/// Diagnostics gathered while producing a value grid.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SolveDiagnostics {
    pub method: String,
    pub march_dt: Option<f64>,
    pub dt_max: Option<f64>,
    pub substeps_per_slice: Option<usize>,
    /// Node updates whose stencil had a negative neighbour weight.
    pub non_monotone_updates: u64,
    /// Node updates that fell back to one-sided drift differences.
    pub upwind_updates: u64,
    pub picard_residuals: Vec<f64>,
}

/// `u(t_n, node)` on a uniform time grid `t_n = n T / N`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueGrid {
    pub lattice: Lattice,
    pub horizon: f64,
    pub times: Vec<f64>,
    /// One flat node vector per time slice.
    pub values: Vec<Vec<f64>>,
    pub diagnostics: SolveDiagnostics,
}

impl ValueGrid {
    pub fn m(&self) -> usize {
        self.lattice.m
    }

    pub fn slice_dt(&self) -> f64 {
        self.horizon / (self.times.len() - 1) as f64
    }

    /// Bracketing slices and the weight of the upper one for time `t`.
    pub(crate) fn time_bracket(&self, t: f64) -> (usize, usize, f64) {
        let last = self.times.len() - 1;
        let s = (t / self.slice_dt()).clamp(0.0, last as f64);
        let lo = (s.floor() as usize).min(last.saturating_sub(1));
        let hi = (lo + 1).min(last);
        (lo, hi, s - lo as f64)
    }

    /// `u(t, x)` by multilinear interpolation in space and linear in time.
    pub fn value_at(&self, t: f64, x: &[f64]) -> f64 {
        let (lo, hi, w) = self.time_bracket(t);
        let mut a = [0.0];
        let mut b = [0.0];
        self.lattice.interpolate(&self.values[lo], 1, x, &mut a);
        self.lattice.interpolate(&self.values[hi], 1, x, &mut b);
        (1.0 - w) * a[0] + w * b[0]
    }

    pub fn final_values(&self) -> &[f64] {
        self.values.last().expect("value grid has at least one slice")
    }

    /// Largest absolute nodal difference over every slice.
    pub fn max_abs_diff(&self, other: &ValueGrid) -> f64 {
        self.values
            .iter()
            .flatten()
            .zip(other.values.iter().flatten())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Per-node gradients of a [`ValueGrid`], one `m`-vector per node and slice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientField {
    pub lattice: Lattice,
    pub horizon: f64,
    pub times: Vec<f64>,
    pub grads: Vec<Vec<f64>>,
}

/// Central differences inside the box, second-order one-sided at faces.
pub fn gradient(v: &ValueGrid) -> GradientField {
    let lat = &v.lattice;
    let grads = v
        .values
        .iter()
        .map(|slice| slice_gradient(lat, slice))
        .collect();
    GradientField {
        lattice: lat.clone(),
        horizon: v.horizon,
        times: v.times.clone(),
        grads,
    }
}

pub(crate) fn slice_gradient(lat: &Lattice, u: &[f64]) -> Vec<f64> {
    let m = lat.m;
    let n = lat.n;
    let mut g = vec![0.0; u.len() * m];
    for flat in 0..u.len() {
        let idx = lat.multi_index(flat);
        for k in 0..m {
            let s = lat.stride(k);
            let h = lat.h[k];
            let i = idx[k];
            // One-sided stencils in difference form, exactly zero on
            // constants.
            g[flat * m + k] = if i == 0 {
                (3.0 * (u[flat + s] - u[flat]) - (u[flat + 2 * s] - u[flat + s])) / (2.0 * h)
            } else if i == n - 1 {
                (3.0 * (u[flat] - u[flat - s]) - (u[flat - s] - u[flat - 2 * s])) / (2.0 * h)
            } else {
                (u[flat + s] - u[flat - s]) / (2.0 * h)
            };
        }
    }
    g
}

impl GradientField {
    pub fn m(&self) -> usize {
        self.lattice.m
    }

    /// `u_x(t, x)`; returns false when `x` was clamped to the box.
    pub fn grad_at(&self, t: f64, x: &[f64], out: &mut [f64]) -> bool {
        let m = self.m();
        let last = self.times.len() - 1;
        let dt = self.horizon / last as f64;
        let s = (t / dt).clamp(0.0, last as f64);
        let lo = (s.floor() as usize).min(last.saturating_sub(1));
        let hi = (lo + 1).min(last);
        let w = s - lo as f64;
        let mut a = [0.0; MAX_GRID_MODES];
        let mut b = [0.0; MAX_GRID_MODES];
        let inside = self.lattice.interpolate(&self.grads[lo], m, x, &mut a);
        self.lattice.interpolate(&self.grads[hi], m, x, &mut b);
        for k in 0..m {
            out[k] = (1.0 - w) * a[k] + w * b[k];
        }
        inside
    }

    /// Largest gradient norm over the nodes of every slice.
    pub fn sup_norm(&self) -> f64 {
        let m = self.m();
        self.grads
            .iter()
            .flat_map(|g| g.chunks(m))
            .map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt())
            .fold(0.0, f64::max)
    }
}
