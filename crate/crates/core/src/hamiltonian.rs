//! The saturated Hamiltonian, the control operator `B` and the feedback map.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, positive, Result};
use crate::field::{self, SpectralField};
use crate::galerkin::GalerkinSystem;

/// Radius `R` of the ball of admissible control values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SaturationBound(f64);

impl SaturationBound {
    pub fn new(r: f64) -> Result<Self> {
        positive("R", r).map(Self)
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// `F(p) = |p|²/2` for `|p| ≤ R`, `R|p| - R²/2` beyond.
pub fn f_value(p: &[f64], r: SaturationBound) -> f64 {
    f_of_norm(field::norm_sq(p).sqrt(), r.0)
}

#[inline]
pub(crate) fn f_of_norm(n: f64, r: f64) -> f64 {
    if n <= r {
        0.5 * n * n
    } else {
        r * n - 0.5 * r * r
    }
}

/// `D_p F(p)`: `p` inside the ball, `R p / |p|` outside.
pub fn dp_f_into(p: &[f64], r: SaturationBound, out: &mut [f64]) {
    let n = field::norm_sq(p).sqrt();
    let scale = if n <= r.0 { 1.0 } else { r.0 / n };
    for (o, v) in out.iter_mut().zip(p) {
        *o = scale * v;
    }
    debug_assert!(field::norm_sq(out).sqrt() <= r.0 * (1.0 + 1e-12));
}

pub fn dp_f(p: &SpectralField, r: SaturationBound) -> SpectralField {
    let mut out = vec![0.0; p.dim()];
    dp_f_into(p.as_slice(), r, &mut out);
    SpectralField::from_vec(out)
}

/// `(Bz)_k = λ_k^{-γ} z_k`.
pub fn apply_b(sys: &GalerkinSystem, z: &SpectralField) -> Result<SpectralField> {
    check_dim(sys.m(), z.dim())?;
    Ok(SpectralField::from_vec(
        z.as_slice()
            .iter()
            .zip(sys.b_spectrum())
            .map(|(v, b)| b * v)
            .collect(),
    ))
}

/// `B` is self-adjoint, so `B* = B`.
pub fn apply_b_star(sys: &GalerkinSystem, w: &SpectralField) -> Result<SpectralField> {
    apply_b(sys, w)
}

/// `z* = -D_p F(B* u_x)` written into `out`.
pub fn feedback_into(sys: &GalerkinSystem, grad_u: &[f64], r: SaturationBound, out: &mut [f64]) {
    let bs = sys.b_spectrum();
    for k in 0..out.len() {
        out[k] = bs[k] * grad_u[k];
    }
    let n = field::norm_sq(out).sqrt();
    let scale = if n <= r.0 { -1.0 } else { -r.0 / n };
    out.iter_mut().for_each(|v| *v *= scale);
}

pub fn feedback_control(
    sys: &GalerkinSystem,
    grad_u: &SpectralField,
    r: SaturationBound,
) -> Result<SpectralField> {
    check_dim(sys.m(), grad_u.dim())?;
    let mut out = vec![0.0; sys.m()];
    feedback_into(sys, grad_u.as_slice(), r, &mut out);
    Ok(SpectralField::from_vec(out))
}

/// `F(B* p)`, the Hamiltonian term of the HJB equation.
pub(crate) fn hamiltonian_term(sys: &GalerkinSystem, p: &[f64], r: f64) -> f64 {
    let n2: f64 = p
        .iter()
        .zip(sys.b_spectrum())
        .map(|(v, b)| (b * v) * (b * v))
        .sum();
    f_of_norm(n2.sqrt(), r)
}
