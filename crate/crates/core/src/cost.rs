//! Running and terminal costs.

use serde::{Deserialize, Serialize};

use crate::error::{positive, Error, Result};
use crate::galerkin::GalerkinSystem;

/// Shape of a cost function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CostDescriptor {
    Constant {
        value: f64,
    },
    /// `min(E(x), cap)` with the enstrophy `E(x) = Σ ω_k² x_k²`.
    SaturatedEnstrophy {
        cap: f64,
        /// Restrict the enstrophy sum to these mode indices.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        modes: Option<Vec<usize>>,
    },
    /// `E(x) / (1 + E(x)/cap)`, bounded by `cap`.
    RationalEnstrophy {
        cap: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        modes: Option<Vec<usize>>,
    },
    /// `Σ d_k x_k²`. Unbounded; only meaningful for the linear-quadratic
    /// reference problem.
    Quadratic { diag: Vec<f64> },
}

/// A cost function bound to a system: `scale · base(x) + offset`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostFunction {
    pub descriptor: CostDescriptor,
    weights: Vec<f64>,
    scale: f64,
    offset: f64,
}

impl CostFunction {
    pub fn new(sys: &GalerkinSystem, descriptor: CostDescriptor) -> Result<Self> {
        let m = sys.m();
        let masked = |modes: &Option<Vec<usize>>| -> Result<Vec<f64>> {
            let mut w = sys.curl_weights().to_vec();
            if let Some(keep) = modes {
                if let Some(&bad) = keep.iter().find(|&&k| k >= m) {
                    return Err(Error::InvalidParameter {
                        name: "modes",
                        value: bad as f64,
                        constraint: format!("mode index must be < m = {m}"),
                    });
                }
                for (k, v) in w.iter_mut().enumerate() {
                    if !keep.contains(&k) {
                        *v = 0.0;
                    }
                }
            }
            Ok(w)
        };
        let weights = match &descriptor {
            CostDescriptor::Constant { value } => {
                if !(value.is_finite() && *value >= 0.0) {
                    return Err(Error::InvalidParameter {
                        name: "value",
                        value: *value,
                        constraint: "constant cost must be finite and >= 0".into(),
                    });
                }
                Vec::new()
            }
            CostDescriptor::SaturatedEnstrophy { cap, modes }
            | CostDescriptor::RationalEnstrophy { cap, modes } => {
                positive("cap", *cap)?;
                masked(modes)?
            }
            CostDescriptor::Quadratic { diag } => {
                if diag.len() != m {
                    return Err(Error::DimensionMismatch {
                        expected: m,
                        got: diag.len(),
                    });
                }
                if let Some(&d) = diag.iter().find(|d| !(d.is_finite() && **d >= 0.0)) {
                    return Err(Error::InvalidParameter {
                        name: "diag",
                        value: d,
                        constraint: "entries must be finite and >= 0".into(),
                    });
                }
                diag.clone()
            }
        };
        Ok(Self {
            descriptor,
            weights,
            scale: 1.0,
            offset: 0.0,
        })
    }

    /// Same cost multiplied by `a ≥ 0`.
    pub fn scaled(&self, a: f64) -> Self {
        Self {
            scale: self.scale * a,
            offset: self.offset * a,
            ..self.clone()
        }
    }

    /// Same cost plus the constant `delta ≥ 0`.
    pub fn shifted(&self, delta: f64) -> Self {
        Self {
            offset: self.offset + delta,
            ..self.clone()
        }
    }

    fn weighted(&self, x: &[f64]) -> f64 {
        self.weights.iter().zip(x).map(|(w, v)| w * v * v).sum()
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let base = match &self.descriptor {
            CostDescriptor::Constant { value } => *value,
            CostDescriptor::SaturatedEnstrophy { cap, .. } => self.weighted(x).min(*cap),
            CostDescriptor::RationalEnstrophy { cap, .. } => {
                let e = self.weighted(x);
                e / (1.0 + e / cap)
            }
            CostDescriptor::Quadratic { .. } => self.weighted(x),
        };
        self.scale * base + self.offset
    }

    /// `sup_x f(x)`, or `None` when unbounded.
    pub fn sup(&self) -> Option<f64> {
        let base = match &self.descriptor {
            CostDescriptor::Constant { value } => *value,
            CostDescriptor::SaturatedEnstrophy { cap, .. }
            | CostDescriptor::RationalEnstrophy { cap, .. } => *cap,
            CostDescriptor::Quadratic { .. } => {
                if self.weights.iter().all(|&w| w == 0.0) {
                    0.0
                } else {
                    return None;
                }
            }
        };
        Some(self.scale * base + self.offset)
    }

    pub fn is_bounded(&self) -> bool {
        self.sup().is_some()
    }

    /// True for the unsaturated quadratic form, whose diagonal is returned.
    pub fn quadratic_diag(&self) -> Option<Vec<f64>> {
        match self.descriptor {
            CostDescriptor::Quadratic { .. } if self.offset == 0.0 => {
                Some(self.weights.iter().map(|w| w * self.scale).collect())
            }
            _ => None,
        }
    }
}

/// Running cost `Φ` and terminal cost `φ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostSpec {
    pub running: CostFunction,
    pub terminal: CostFunction,
}

impl CostSpec {
    pub fn new(running: CostFunction, terminal: CostFunction) -> Self {
        Self { running, terminal }
    }

    pub fn from_descriptors(
        sys: &GalerkinSystem,
        running: CostDescriptor,
        terminal: CostDescriptor,
    ) -> Result<Self> {
        Ok(Self::new(
            CostFunction::new(sys, running)?,
            CostFunction::new(sys, terminal)?,
        ))
    }

    /// `|φ|_0`.
    pub fn sup_phi(&self) -> Option<f64> {
        self.terminal.sup()
    }

    /// `|Φ|_0`.
    #[allow(non_snake_case)]
    pub fn sup_Phi(&self) -> Option<f64> {
        self.running.sup()
    }

    pub fn is_bounded(&self) -> bool {
        self.running.is_bounded() && self.terminal.is_bounded()
    }
}

/// A bounded cost, rejecting the quadratic descriptor.
pub fn make_bounded_cost(sys: &GalerkinSystem, descriptor: CostDescriptor) -> Result<CostFunction> {
    if matches!(descriptor, CostDescriptor::Quadratic { .. }) {
        return Err(Error::Unsupported(
            "quadratic costs are unbounded; use CostFunction::new for the linear-quadratic problem".into(),
        ));
    }
    CostFunction::new(sys, descriptor)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::galerkin::{build_torus_system, HypothesisParams};

    fn sys() -> GalerkinSystem {
        build_torus_system(3, 1, HypothesisParams::default()).unwrap()
    }

    #[test]
    fn saturated_enstrophy_caps() {
        let c = make_bounded_cost(&sys(), CostDescriptor::SaturatedEnstrophy { cap: 2.0, modes: None }).unwrap();
        assert_eq!(c.eval(&[0.0; 3]), 0.0);
        assert_eq!(c.eval(&[0.0, 0.0, 100.0]), 2.0);
        // ω² = (1, 4, 9) on the interval
        assert!((c.eval(&[0.5, 0.25, 0.0]) - 0.5).abs() < 1e-15);
        assert_eq!(c.sup(), Some(2.0));
    }

    #[test]
    fn rational_enstrophy_below_cap() {
        let c = make_bounded_cost(&sys(), CostDescriptor::RationalEnstrophy { cap: 1.0, modes: None }).unwrap();
        let v = c.eval(&[1e3, 0.0, 0.0]);
        assert!(v < 1.0 && v > 0.999);
    }

    #[test]
    fn mode_mask() {
        let d = CostDescriptor::SaturatedEnstrophy { cap: 10.0, modes: Some(vec![0]) };
        let c = CostFunction::new(&sys(), d).unwrap();
        assert_eq!(c.eval(&[1.0, 5.0, 5.0]), 1.0);
        let bad = CostDescriptor::SaturatedEnstrophy { cap: 10.0, modes: Some(vec![3]) };
        assert!(CostFunction::new(&sys(), bad).is_err());
    }

    #[test]
    fn rejects_nonpositive_cap_and_quadratic_as_bounded() {
        let s = sys();
        assert!(make_bounded_cost(&s, CostDescriptor::SaturatedEnstrophy { cap: 0.0, modes: None }).is_err());
        assert!(make_bounded_cost(&s, CostDescriptor::Quadratic { diag: vec![1.0; 3] }).is_err());
        let q = CostFunction::new(&s, CostDescriptor::Quadratic { diag: vec![1.0; 3] }).unwrap();
        assert_eq!(q.sup(), None);
    }

    #[test]
    fn scale_and_shift() {
        let c = make_bounded_cost(&sys(), CostDescriptor::SaturatedEnstrophy { cap: 2.0, modes: None }).unwrap();
        let x = [0.3, 0.1, 0.0];
        assert_eq!(c.scaled(2.0).eval(&x), 2.0 * c.eval(&x));
        assert_eq!(c.shifted(0.1).eval(&x), c.eval(&x) + 0.1);
        assert_eq!(c.shifted(0.1).sup(), Some(2.1));
    }

    #[test]
    fn descriptor_json_rejects_unknown_fields() {
        let ok: CostDescriptor = serde_json::from_str(r#"{"kind":"saturated_enstrophy","cap":1.0}"#).unwrap();
        assert_eq!(ok, CostDescriptor::SaturatedEnstrophy { cap: 1.0, modes: None });
        assert!(serde_json::from_str::<CostDescriptor>(r#"{"kind":"constant","value":1.0,"cpa":2}"#).is_err());
    }
}
