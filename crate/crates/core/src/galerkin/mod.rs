//! The truncated spectral model: the Stokes operator `A`, the convective
//! term `b_m`, the noise covariance `Q` and the control operator `B`, all
//! diagonal (or, for `b_m`, an explicit tensor) in one orthonormal basis.

pub mod basis;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::field::SpectralField;
use crate::rng::{path_rng, standard_normal};

pub use basis::{Domain, Mode, Trig};

/// Exponents fixing the noise spectrum and the smoothing of `B`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HypothesisParams {
    /// Trace regularity exponent: `Tr[(-A)^{1+g} Q] < ∞`.
    pub g: f64,
    /// Inverse covariance exponent, `|Q^{-1/2} x| ≤ c_r |(-A)^r x|`.
    pub r: f64,
    /// Smoothing exponent of the control operator.
    pub gamma: f64,
}

impl HypothesisParams {
    /// Checks `g > 0`, `r ∈ (1, 3/2)` (equivalently `ε ∈ (0, 1/2)`) and
    /// `γ ≥ 0`. The smoothing requirement `γ > 1 - ε` is left to
    /// [`validate_hypotheses`] so that degenerate configurations such as
    /// `B = I` can still be built; use [`HypothesisParams::strict`] to enforce it
    /// at construction.
    pub fn new(g: f64, r: f64, gamma: f64) -> Result<Self> {
        if !(g.is_finite() && g > 0.0) {
            return Err(Error::InvalidParameter {
                name: "g",
                value: g,
                constraint: "must be > 0".into(),
            });
        }
        if !(r > 1.0 && r < 1.5) {
            return Err(Error::InvalidParameter {
                name: "r",
                value: r,
                constraint: "must lie in (1, 3/2)".into(),
            });
        }
        if !(gamma.is_finite() && gamma >= 0.0) {
            return Err(Error::InvalidParameter {
                name: "gamma",
                value: gamma,
                constraint: "must be finite and >= 0".into(),
            });
        }
        Ok(Self { g, r, gamma })
    }

    pub fn strict(g: f64, r: f64, gamma: f64) -> Result<Self> {
        let p = Self::new(g, r, gamma)?;
        if !p.smoothing_ok() {
            return Err(Error::InvalidParameter {
                name: "gamma",
                value: gamma,
                constraint: format!("must exceed 1 - epsilon = {}", 1.0 - p.epsilon()),
            });
        }
        Ok(p)
    }

    /// `ε = (3 - 2r) / 2`.
    pub fn epsilon(&self) -> f64 {
        (3.0 - 2.0 * self.r) / 2.0
    }

    pub fn smoothing_ok(&self) -> bool {
        self.gamma > 1.0 - self.epsilon()
    }
}

impl Default for HypothesisParams {
    fn default() -> Self {
        Self {
            g: 0.2,
            r: 1.4,
            gamma: 1.0,
        }
    }
}

/// `T[i][j][k] = (b(e_i, e_j), e_k)`, dense plus a list of nonzeros.
#[derive(Debug, Clone, PartialEq)]
pub struct StructureTensor {
    m: usize,
    dense: Vec<f64>,
    nonzeros: Vec<(usize, usize, usize, f64)>,
}

impl StructureTensor {
    fn build(domain: Domain, modes: &[Mode]) -> Self {
        let m = modes.len();
        let mut dense = vec![0.0; m * m * m];
        for i in 0..m {
            for j in 0..m {
                // Only j < k is integrated; the mirror is set by antisymmetry
                // so that T[i][j][k] = -T[i][k][j] holds bit for bit.
                for k in j + 1..m {
                    let v = basis::structure_entry(domain, &modes[i], &modes[j], &modes[k]);
                    // Products of rounded polarization components can leave
                    // residue where the exact entry vanishes.
                    let v = if v.abs() < 1e-13 { 0.0 } else { v };
                    dense[(i * m + j) * m + k] = v;
                    dense[(i * m + k) * m + j] = -v;
                }
            }
        }
        let nonzeros = dense
            .iter()
            .enumerate()
            .filter(|(_, &v)| v != 0.0)
            .map(|(flat, &v)| (flat / (m * m), (flat / m) % m, flat % m, v))
            .collect();
        Self {
            m,
            dense,
            nonzeros,
        }
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.dense[(i * self.m + j) * self.m + k]
    }

    pub fn nonzeros(&self) -> &[(usize, usize, usize, f64)] {
        &self.nonzeros
    }

    pub fn is_zero(&self) -> bool {
        self.nonzeros.is_empty()
    }
}

/// The finite-dimensional model at truncation level `m`.
#[derive(Debug, Clone)]
pub struct GalerkinSystem {
    domain: Domain,
    modes: Vec<Mode>,
    lambdas: Vec<f64>,
    q_spectrum: Vec<f64>,
    b_spectrum: Vec<f64>,
    curl_weights: Vec<f64>,
    tensor: StructureTensor,
    hyp: HypothesisParams,
    bilinear_enabled: bool,
    noise_enabled: bool,
}

/// Builds the truncated system on the periodic torus (`space_dim` 2 or 3)
/// or the Dirichlet interval Burgers surrogate (`space_dim` 1).
///
/// The noise spectrum is `q_k = λ_k^{-2r}` so that `Q^{1/2} = (-A)^{-r}`,
/// and `B` is diagonal with entries `λ_k^{-γ}`.
pub fn build_torus_system(
    mode_budget: usize,
    space_dim: usize,
    hyp: HypothesisParams,
) -> Result<GalerkinSystem> {
    if mode_budget == 0 {
        return Err(Error::InvalidParameter {
            name: "mode_budget",
            value: 0.0,
            constraint: "must be >= 1".into(),
        });
    }
    let domain = match space_dim {
        1 => Domain::DirichletInterval,
        2 | 3 => Domain::Torus(space_dim),
        _ => {
            return Err(Error::InvalidParameter {
                name: "space_dim",
                value: space_dim as f64,
                constraint: "must be 1, 2 or 3".into(),
            })
        }
    };
    let modes = basis::modes(domain, mode_budget);
    let lambdas: Vec<f64> = modes.iter().map(Mode::k_sq).collect();
    let q_spectrum = lambdas.iter().map(|l| l.powf(-2.0 * hyp.r)).collect();
    let b_spectrum = lambdas.iter().map(|l| l.powf(-hyp.gamma)).collect();
    let curl_weights = modes.iter().map(|md| basis::curl_weight(domain, md)).collect();
    let tensor = StructureTensor::build(domain, &modes);
    Ok(GalerkinSystem {
        domain,
        modes,
        lambdas,
        q_spectrum,
        b_spectrum,
        curl_weights,
        tensor,
        hyp,
        bilinear_enabled: true,
        noise_enabled: true,
    })
}

impl GalerkinSystem {
    pub fn with_bilinear(mut self, enabled: bool) -> Self {
        self.bilinear_enabled = enabled;
        self
    }

    pub fn with_noise(mut self, enabled: bool) -> Self {
        self.noise_enabled = enabled;
        self
    }

    pub fn m(&self) -> usize {
        self.lambdas.len()
    }

    pub fn space_dim(&self) -> usize {
        match self.domain {
            Domain::DirichletInterval => 1,
            Domain::Torus(d) => d,
        }
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn modes(&self) -> &[Mode] {
        &self.modes
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    /// Eigenvalues of `Q`, irrespective of the noise switch.
    pub fn q_spectrum(&self) -> &[f64] {
        &self.q_spectrum
    }

    /// Noise variances actually driving the dynamics (zero when noise is
    /// disabled).
    pub fn effective_q(&self, k: usize) -> f64 {
        if self.noise_enabled {
            self.q_spectrum[k]
        } else {
            0.0
        }
    }

    pub fn trace_q(&self) -> f64 {
        (0..self.m()).map(|k| self.effective_q(k)).sum()
    }

    pub fn b_spectrum(&self) -> &[f64] {
        &self.b_spectrum
    }

    /// Per-mode enstrophy weights `∫ |curl e_k|²`.
    pub fn curl_weights(&self) -> &[f64] {
        &self.curl_weights
    }

    pub fn tensor(&self) -> &StructureTensor {
        &self.tensor
    }

    pub fn hyp(&self) -> HypothesisParams {
        self.hyp
    }

    pub fn bilinear_enabled(&self) -> bool {
        self.bilinear_enabled
    }

    pub fn noise_enabled(&self) -> bool {
        self.noise_enabled
    }

    /// `b_m(x, y)` written into `out`; zero when the bilinear term is switched off.
    pub fn bilinear_into(&self, x: &[f64], y: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        if !self.bilinear_enabled {
            return;
        }
        for &(i, j, k, t) in self.tensor.nonzeros() {
            out[k] += t * x[i] * y[j];
        }
    }

    /// Drift of the uncontrolled system `Ax + b_m(x)`.
    pub fn drift_into(&self, x: &[f64], out: &mut [f64]) {
        self.bilinear_into(x, x, out);
        for ((o, l), xv) in out.iter_mut().zip(&self.lambdas).zip(x) {
            *o -= l * xv;
        }
    }

    pub fn descriptor(&self) -> SystemDescriptor {
        SystemDescriptor {
            m: self.m(),
            space_dim: self.space_dim(),
            lambdas: self.lambdas.clone(),
            q_spectrum: self.q_spectrum.clone(),
            hyp: self.hyp,
            epsilon: self.hyp.epsilon(),
            bilinear_enabled: self.bilinear_enabled,
            noise_enabled: self.noise_enabled,
            tensor: self.tensor.nonzeros().to_vec(),
        }
    }
}

/// `b_m(x, y)`; `result_k = Σ_{i,j} T[i][j][k] x_i y_j`.
pub fn bilinear(sys: &GalerkinSystem, x: &SpectralField, y: &SpectralField) -> Result<SpectralField> {
    check_dim(sys.m(), x.dim())?;
    check_dim(sys.m(), y.dim())?;
    let mut out = vec![0.0; sys.m()];
    sys.bilinear_into(x.as_slice(), y.as_slice(), &mut out);
    Ok(SpectralField::from_vec(out))
}

/// `(-A)^s x`.
pub fn apply_fractional(sys: &GalerkinSystem, s: f64, x: &SpectralField) -> Result<SpectralField> {
    check_dim(sys.m(), x.dim())?;
    Ok(SpectralField::from_vec(
        x.as_slice()
            .iter()
            .zip(sys.lambdas())
            .map(|(v, l)| l.powf(s) * v)
            .collect(),
    ))
}

/// Reproducibility snapshot of a system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemDescriptor {
    pub m: usize,
    pub space_dim: usize,
    pub lambdas: Vec<f64>,
    pub q_spectrum: Vec<f64>,
    pub hyp: HypothesisParams,
    pub epsilon: f64,
    pub bilinear_enabled: bool,
    pub noise_enabled: bool,
    /// Sparse `(i, j, k, value)` entries of the structure tensor.
    pub tensor: Vec<(usize, usize, usize, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisCheck {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisReport {
    pub epsilon: f64,
    /// Partial sums of `Σ λ_k^{1+g} q_k`.
    pub trace_partial_sums: Vec<f64>,
    /// Exponent `s` with `λ_k^{1+g} q_k = λ_k^s`.
    pub trace_exponent: f64,
    pub trace_summable: bool,
    pub checks: Vec<HypothesisCheck>,
}

impl HypothesisReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn violations(&self) -> Vec<&HypothesisCheck> {
        self.checks.iter().filter(|c| !c.passed).collect()
    }
}

/// Checks the standing assumptions on `Q` and `B`. Never fails; violations
/// are listed in the report.
pub fn validate_hypotheses(sys: &GalerkinSystem) -> HypothesisReport {
    let hyp = sys.hyp();
    let eps = hyp.epsilon();
    let mut checks = Vec::new();

    checks.push(HypothesisCheck {
        name: "r_range".into(),
        passed: hyp.r > 1.0 && hyp.r < 1.5,
        detail: format!("r = {} must lie in (1, 3/2)", hyp.r),
    });
    checks.push(HypothesisCheck {
        name: "epsilon_range".into(),
        passed: eps > 0.0 && eps < 0.5,
        detail: format!("epsilon = (3 - 2r)/2 = {eps} must lie in (0, 1/2)"),
    });
    checks.push(HypothesisCheck {
        name: "gamma_smoothing".into(),
        passed: hyp.smoothing_ok(),
        detail: format!("gamma = {} must exceed 1 - epsilon = {}", hyp.gamma, 1.0 - eps),
    });
    checks.push(HypothesisCheck {
        name: "q_positive".into(),
        passed: sys.q_spectrum().iter().all(|&q| q > 0.0),
        detail: "ker Q = {0} requires every q_k > 0".into(),
    });

    // Trace condition. Summands λ^{1+g} q_k = λ^{1+g-2r}; on a d-dimensional
    // domain the eigenvalue counting function grows like Λ^{d/2}, so the
    // series converges iff the exponent is below -d/2.
    let summands: Vec<f64> = sys
        .lambdas()
        .iter()
        .zip(sys.q_spectrum())
        .map(|(l, q)| l.powf(1.0 + hyp.g) * q)
        .collect();
    let mut partial = 0.0;
    let trace_partial_sums: Vec<f64> = summands
        .iter()
        .map(|s| {
            partial += s;
            partial
        })
        .collect();
    let monotone = summands.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12));
    let exponent = 1.0 + hyp.g - 2.0 * hyp.r;
    let threshold = -(sys.space_dim() as f64) / 2.0;
    let trace_summable = monotone && exponent < threshold;
    checks.push(HypothesisCheck {
        name: "trace_summability".into(),
        passed: trace_summable,
        detail: format!(
            "summand exponent 1 + g - 2r = {exponent} must be < -d/2 = {threshold}; \
             monotone tail: {monotone}; partial sum {partial:.6e}"
        ),
    });

    // |Q^{-1/2} x| = |(-A)^r x| for the diagonal spectrum (c_r = 1).
    let mut rng = path_rng(0x51_9e, 0);
    let mut worst = 0.0f64;
    for _ in 0..32 {
        let x: Vec<f64> = (0..sys.m()).map(|_| standard_normal(&mut rng)).collect();
        let lhs: f64 = x
            .iter()
            .zip(sys.q_spectrum())
            .map(|(v, q)| v * v / q)
            .sum::<f64>()
            .sqrt();
        let rhs: f64 = x
            .iter()
            .zip(sys.lambdas())
            .map(|(v, l)| (l.powf(hyp.r) * v).powi(2))
            .sum::<f64>()
            .sqrt();
        worst = worst.max((lhs - rhs).abs() / rhs.max(f64::MIN_POSITIVE));
    }
    checks.push(HypothesisCheck {
        name: "q2_identity".into(),
        passed: worst < 1e-12,
        detail: format!("max relative gap between |Q^-1/2 x| and |(-A)^r x|: {worst:.3e}"),
    });

    HypothesisReport {
        epsilon: eps,
        trace_partial_sums,
        trace_exponent: exponent,
        trace_summable,
        checks,
    }
}

/// Empirical constant in `(b(x, y), (-A)^{1/2} z) ≤ c |Ax| |Ay| |z|`.
///
/// For each Gaussian pair `(x, y)` the supremum over `z` is attained at
/// `z ∝ (-A)^{1/2} b(x, y)`, so the ratio is evaluated there.
pub fn estimate_bilinear_constant(sys: &GalerkinSystem, n_samples: usize, seed: u64) -> f64 {
    let m = sys.m();
    let mut rng = path_rng(seed, 0);
    let mut b = vec![0.0; m];
    let mut sup = 0.0f64;
    let lam = sys.lambdas();
    for _ in 0..n_samples {
        let x: Vec<f64> = (0..m).map(|_| standard_normal(&mut rng)).collect();
        let y: Vec<f64> = (0..m).map(|_| standard_normal(&mut rng)).collect();
        b.iter_mut().for_each(|v| *v = 0.0);
        for &(i, j, k, t) in sys.tensor().nonzeros() {
            b[k] += t * x[i] * y[j];
        }
        let num: f64 = b
            .iter()
            .zip(lam)
            .map(|(v, l)| l * v * v)
            .sum::<f64>()
            .sqrt();
        let ax = crate::field::weighted_norm_sq(&x, lam, 2.0).sqrt();
        let ay = crate::field::weighted_norm_sq(&y, lam, 2.0).sqrt();
        if ax > 0.0 && ay > 0.0 {
            sup = sup.max(num / (ax * ay));
        }
    }
    sup
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sys(m: usize, d: usize) -> GalerkinSystem {
        build_torus_system(m, d, HypothesisParams::default()).unwrap()
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(build_torus_system(0, 3, HypothesisParams::default()).is_err());
        assert!(build_torus_system(4, 4, HypothesisParams::default()).is_err());
        assert!(HypothesisParams::new(0.2, 1.5, 1.0).is_err());
        assert!(HypothesisParams::new(-0.1, 1.2, 1.0).is_err());
        assert!(HypothesisParams::strict(0.2, 1.25, 0.5).is_err());
    }

    #[test]
    fn epsilon_from_r() {
        let h = HypothesisParams::new(0.2, 1.25, 1.0).unwrap();
        assert!((h.epsilon() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn gamma_violation_is_reported() {
        let s = build_torus_system(4, 2, HypothesisParams::new(0.2, 1.25, 0.5).unwrap()).unwrap();
        let report = validate_hypotheses(&s);
        assert!(!report.passed());
        let names: Vec<_> = report.violations().iter().map(|c| c.name.clone()).collect();
        assert_eq!(names, vec!["gamma_smoothing".to_string()]);
    }

    #[test]
    fn default_hypotheses_hold_in_every_dimension() {
        for d in 1..=3 {
            let report = validate_hypotheses(&sys(16, d));
            assert!(report.passed(), "{d}: {:?}", report.violations());
        }
    }

    #[test]
    fn trace_not_summable_when_exponent_too_large() {
        // 3D needs 1 + g - 2r < -3/2.
        let s = build_torus_system(16, 3, HypothesisParams::new(0.4, 1.4, 1.0).unwrap()).unwrap();
        let report = validate_hypotheses(&s);
        assert!(!report.trace_summable);
        assert_eq!(report.violations()[0].name, "trace_summability");
    }

    #[test]
    fn single_mode_tensor_vanishes() {
        for d in 1..=3 {
            assert!(sys(1, d).tensor().is_zero());
        }
    }

    #[test]
    fn antisymmetry_in_last_two_slots() {
        for (m, d) in [(12, 1), (16, 2), (24, 3)] {
            let s = sys(m, d);
            let scale = s
                .tensor()
                .nonzeros()
                .iter()
                .map(|e| e.3.abs())
                .fold(0.0, f64::max);
            for i in 0..m {
                for j in 0..m {
                    for k in 0..m {
                        let t = s.tensor();
                        assert!((t.get(i, j, k) + t.get(i, k, j)).abs() <= 1e-14 * scale);
                    }
                }
            }
        }
    }

    #[test]
    fn fractional_powers() {
        let s = sys(8, 3);
        let x = SpectralField::new((0..8).map(|i| (i as f64 * 0.7).sin()).collect()).unwrap();
        assert_eq!(apply_fractional(&s, 0.0, &x).unwrap(), x);
        let back = apply_fractional(&s, -1.0, &apply_fractional(&s, 1.0, &x).unwrap()).unwrap();
        for k in 0..8 {
            assert!((back[k] - x[k]).abs() <= 1e-14 * x[k].abs().max(1e-300));
        }
        let half = apply_fractional(&s, 0.5, &apply_fractional(&s, 0.5, &x).unwrap()).unwrap();
        let one = apply_fractional(&s, 1.0, &x).unwrap();
        for k in 0..8 {
            assert!((half[k] - one[k]).abs() <= 1e-13 * one[k].abs());
        }
    }

    #[test]
    fn bilinear_of_zero_is_zero() {
        let s = sys(16, 3);
        let x = SpectralField::zeros(16);
        let y = SpectralField::new((0..16).map(|i| i as f64).collect()).unwrap();
        assert_eq!(bilinear(&s, &x, &y).unwrap(), SpectralField::zeros(16));
        assert!(bilinear(&s, &SpectralField::zeros(3), &y).is_err());
    }

    #[test]
    fn descriptor_round_trips_through_json() {
        let s = sys(16, 3);
        let d = s.descriptor();
        let json = serde_json::to_string(&d).unwrap();
        let back: SystemDescriptor = serde_json::from_str(&json).unwrap();
        assert_eq!(back, d);
    }

    #[test]
    fn bilinear_constant_positive_when_triads_exist() {
        assert_eq!(estimate_bilinear_constant(&sys(12, 3), 200, 1), 0.0);
        assert!(estimate_bilinear_constant(&sys(16, 3), 200, 1) > 0.0);
    }
}
