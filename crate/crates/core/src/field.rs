//! Coefficient vectors in the truncated Stokes eigenbasis.

use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A velocity field represented by its coefficients against the orthonormal
/// eigenbasis `{e_k}` of `-A`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SpectralField(Vec<f64>);

impl SpectralField {
    /// Wraps a coefficient vector, rejecting NaN and infinite entries.
    pub fn new(coeffs: Vec<f64>) -> Result<Self> {
        if let Some((i, v)) = coeffs.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "coeffs",
                value: *v,
                constraint: format!("entry {i} must be finite"),
            });
        }
        Ok(Self(coeffs))
    }

    /// Unchecked constructor for internal hot loops where finiteness is
    /// tracked separately.
    pub(crate) fn from_vec(coeffs: Vec<f64>) -> Self {
        Self(coeffs)
    }

    pub fn zeros(m: usize) -> Self {
        Self(vec![0.0; m])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn dot(&self, other: &SpectralField) -> f64 {
        dot(&self.0, &other.0)
    }

    /// `|x|`, the `H` norm.
    pub fn norm(&self) -> f64 {
        norm_sq(&self.0).sqrt()
    }

    pub fn norm_sq(&self) -> f64 {
        norm_sq(&self.0)
    }

    /// `‖x‖² = Σ λ_k x_k²`, the `V` norm squared.
    pub fn v_norm_sq(&self, lambdas: &[f64]) -> f64 {
        weighted_norm_sq(&self.0, lambdas, 1.0)
    }

    pub fn v_norm(&self, lambdas: &[f64]) -> f64 {
        self.v_norm_sq(lambdas).sqrt()
    }

    /// `|Ax|² = Σ λ_k² x_k²`.
    pub fn a_norm_sq(&self, lambdas: &[f64]) -> f64 {
        weighted_norm_sq(&self.0, lambdas, 2.0)
    }

    pub fn a_norm(&self, lambdas: &[f64]) -> f64 {
        self.a_norm_sq(lambdas).sqrt()
    }

    /// `|(-A)^s x|²`.
    pub fn fractional_norm_sq(&self, lambdas: &[f64], s: f64) -> f64 {
        weighted_norm_sq(&self.0, lambdas, 2.0 * s)
    }

    pub fn scaled(&self, a: f64) -> SpectralField {
        Self(self.0.iter().map(|v| a * v).collect())
    }

    /// `a * self + b * other`.
    pub fn lin_comb(&self, a: f64, other: &SpectralField, b: f64) -> SpectralField {
        Self(
            self.0
                .iter()
                .zip(&other.0)
                .map(|(x, y)| a * x + b * y)
                .collect(),
        )
    }
}

impl Index<usize> for SpectralField {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl IndexMut<usize> for SpectralField {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.0[i]
    }
}

impl From<SpectralField> for Vec<f64> {
    fn from(f: SpectralField) -> Self {
        f.0
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm_sq(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum()
}

/// `Σ λ_k^p x_k²`
pub(crate) fn weighted_norm_sq(x: &[f64], lambdas: &[f64], p: f64) -> f64 {
    x.iter()
        .zip(lambdas)
        .map(|(v, l)| l.powf(p) * v * v)
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_nan() {
        assert!(SpectralField::new(vec![1.0, f64::NAN]).is_err());
        assert!(SpectralField::new(vec![f64::INFINITY]).is_err());
    }

    #[test]
    fn norm_chain() {
        let lambdas = [1.0f64, 2.0, 5.0];
        let x = SpectralField::new(vec![0.3, -1.2, 0.7]).unwrap();
        let l1 = lambdas[0];
        assert!(x.norm() <= l1.powf(-0.5) * x.v_norm(&lambdas) + 1e-15);
        assert!(l1.powf(-0.5) * x.v_norm(&lambdas) <= x.a_norm(&lambdas) / l1 + 1e-15);
        let expected = 0.09 + 2.0 * 1.44 + 5.0 * 0.49;
        assert!((x.v_norm_sq(&lambdas) - expected).abs() < 1e-14);
    }
}
