//! Time stepping of the controlled and closed-loop Galerkin systems.

use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, positive, Error, Result};
use crate::field::{self, SpectralField};
use crate::galerkin::GalerkinSystem;
use crate::hamiltonian::{feedback_into, SaturationBound};
use crate::hjb::{GradientField, ValueGrid};
use crate::ou::ou_variance;
use crate::rng::{path_rng, standard_normal, PathRng};
use crate::stats::{self, Estimate};

/// Paths whose state norm exceeds this are aborted and excluded.
pub const BLOW_UP_THRESHOLD: f64 = 1e6;

/// Offset separating the control streams from the noise streams.
const CONTROL_STREAM_SALT: u64 = 0x9e37_79b9_7f4a_7c15;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    #[default]
    ExponentialEuler,
    EulerMaruyama,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorSpec {
    #[serde(default)]
    pub scheme: Scheme,
    pub dt: f64,
    pub horizon: f64,
}

impl IntegratorSpec {
    pub fn new(scheme: Scheme, dt: f64, horizon: f64) -> Result<Self> {
        let spec = Self { scheme, dt, horizon };
        spec.n_steps()?;
        Ok(spec)
    }

    /// Number of steps; `horizon` must be an integer multiple of `dt`.
    pub fn n_steps(&self) -> Result<usize> {
        positive("dt", self.dt)?;
        positive("T", self.horizon)?;
        if self.dt > self.horizon {
            return Err(Error::InvalidParameter {
                name: "dt",
                value: self.dt,
                constraint: format!("must not exceed T = {}", self.horizon),
            });
        }
        let n = (self.horizon / self.dt).round();
        if (n * self.dt - self.horizon).abs() > 1e-9 * self.horizon {
            return Err(Error::InvalidParameter {
                name: "dt",
                value: self.dt,
                constraint: format!("T = {} must be an integer multiple of dt", self.horizon),
            });
        }
        Ok(n as usize)
    }

    pub fn validate_for(&self, sys: &GalerkinSystem) -> Result<usize> {
        let n = self.n_steps()?;
        if self.scheme == Scheme::EulerMaruyama {
            let lmax = sys.lambdas().iter().copied().fold(0.0, f64::max);
            if self.dt * lmax > 2.0 {
                return Err(Error::InvalidParameter {
                    name: "dt",
                    value: self.dt,
                    constraint: format!("Euler-Maruyama needs dt * lambda_max <= 2 (lambda_max = {lmax})"),
                });
            }
        }
        Ok(n)
    }

    pub fn times(&self) -> Result<Vec<f64>> {
        let n = self.n_steps()?;
        Ok((0..=n).map(|i| i as f64 * self.dt).collect())
    }
}

/// `(e^z - 1) / z`, by its series near zero.
pub fn phi1(z: f64) -> f64 {
    if z.abs() < 1e-4 {
        1.0 + z / 2.0 * (1.0 + z / 3.0 * (1.0 + z / 4.0))
    } else {
        z.exp_m1() / z
    }
}

/// A control law `z = policy(t, x)`. Randomized policies draw from `rng`,
/// which is independent of the noise stream.
pub trait Policy: Sync {
    fn control(&self, t: f64, x: &[f64], rng: &mut PathRng, out: &mut [f64]);

    fn name(&self) -> String;

    /// Number of evaluations that left the domain of the law (for feedback
    /// read from a truncated value grid).
    fn excursions(&self) -> u64 {
        0
    }
}

pub struct ZeroPolicy;

impl Policy for ZeroPolicy {
    fn control(&self, _: f64, _: &[f64], _: &mut PathRng, out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
    }

    fn name(&self) -> String {
        "zero".into()
    }
}

pub struct ConstantPolicy(pub Vec<f64>);

impl Policy for ConstantPolicy {
    fn control(&self, _: f64, _: &[f64], _: &mut PathRng, out: &mut [f64]) {
        out.copy_from_slice(&self.0);
    }

    fn name(&self) -> String {
        format!("constant{:?}", self.0)
    }
}

/// Independent draws, uniform in the ball of radius `R`, at every step.
pub struct RandomPolicy(pub SaturationBound);

impl Policy for RandomPolicy {
    fn control(&self, _: f64, _: &[f64], rng: &mut PathRng, out: &mut [f64]) {
        let m = out.len();
        for v in out.iter_mut() {
            *v = standard_normal(rng);
        }
        let n = field::norm_sq(out).sqrt();
        let radius = self.0.value() * rng.random::<f64>().powf(1.0 / m as f64);
        let s = if n > 0.0 { radius / n } else { 0.0 };
        out.iter_mut().for_each(|v| *v *= s);
    }

    fn name(&self) -> String {
        "random".into()
    }
}

/// `z*(t) = -D_pF(B* u_x(T - t, x))` with `u_x` read from a gradient field.
pub struct FeedbackPolicy<'a> {
    sys: &'a GalerkinSystem,
    grads: GradientField,
    r: SaturationBound,
    horizon: f64,
    excursions: AtomicU64,
}

impl<'a> FeedbackPolicy<'a> {
    /// Feedback for a problem of horizon `horizon` from a value grid that must
    /// cover it.
    pub fn new(sys: &'a GalerkinSystem, value: &ValueGrid, r: SaturationBound, horizon: f64) -> Result<Self> {
        check_dim(sys.m(), value.m())?;
        if value.horizon + 1e-12 < horizon {
            return Err(Error::HorizonTooShort {
                value_t: value.horizon,
                sim_t: horizon,
            });
        }
        Ok(Self {
            sys,
            grads: crate::hjb::gradient(value),
            r,
            horizon,
            excursions: AtomicU64::new(0),
        })
    }

    pub fn gradient_field(&self) -> &GradientField {
        &self.grads
    }
}

impl Policy for FeedbackPolicy<'_> {
    fn control(&self, t: f64, x: &[f64], _: &mut PathRng, out: &mut [f64]) {
        let mut g = [0.0; crate::hjb::MAX_GRID_MODES];
        let m = x.len();
        if !self.grads.grad_at(self.horizon - t, x, &mut g[..m]) {
            self.excursions.fetch_add(1, Ordering::Relaxed);
        }
        feedback_into(self.sys, &g[..m], self.r, out);
    }

    fn name(&self) -> String {
        "feedback".into()
    }

    fn excursions(&self) -> u64 {
        self.excursions.load(Ordering::Relaxed)
    }
}

/// Another policy plus independent `N(0, σ²)` kicks per component.
pub struct PerturbedPolicy<'a, P: Policy> {
    pub inner: &'a P,
    pub sigma: f64,
}

impl<P: Policy> Policy for PerturbedPolicy<'_, P> {
    fn control(&self, t: f64, x: &[f64], rng: &mut PathRng, out: &mut [f64]) {
        self.inner.control(t, x, rng, out);
        for v in out.iter_mut() {
            *v += self.sigma * standard_normal(rng);
        }
    }

    fn name(&self) -> String {
        format!("perturbed_{}", self.inner.name())
    }

    fn excursions(&self) -> u64 {
        self.inner.excursions()
    }
}

/// Wraps a closure as a deterministic policy.
pub struct FnPolicy<F>(pub String, pub F);

impl<F: Fn(f64, &[f64], &mut [f64]) + Sync> Policy for FnPolicy<F> {
    fn control(&self, t: f64, x: &[f64], _: &mut PathRng, out: &mut [f64]) {
        (self.1)(t, x, out);
    }

    fn name(&self) -> String {
        self.0.clone()
    }
}

/// One time step of the controlled dynamics.
pub(crate) struct Stepper<'a> {
    sys: &'a GalerkinSystem,
    scheme: Scheme,
    dt: f64,
    decay: Vec<f64>,
    phi1_dt: Vec<f64>,
    noise_std: Vec<f64>,
}

impl<'a> Stepper<'a> {
    pub fn new(sys: &'a GalerkinSystem, scheme: Scheme, dt: f64) -> Self {
        let lam = sys.lambdas();
        let m = sys.m();
        let noise_std = (0..m)
            .map(|k| match scheme {
                Scheme::ExponentialEuler => ou_variance(lam[k], sys.effective_q(k), dt).sqrt(),
                Scheme::EulerMaruyama => (sys.effective_q(k) * dt).sqrt(),
            })
            .collect();
        Self {
            sys,
            scheme,
            dt,
            decay: lam.iter().map(|l| (-l * dt).exp()).collect(),
            phi1_dt: lam.iter().map(|l| phi1(-l * dt) * dt).collect(),
            noise_std,
        }
    }

    /// `x ← step(x, z)`, using `scratch` (length m) for the bilinear term.
    pub fn step(&self, x: &mut [f64], z: &[f64], rng: &mut PathRng, scratch: &mut [f64]) {
        self.sys.bilinear_into(x, x, scratch);
        let bs = self.sys.b_spectrum();
        let lam = self.sys.lambdas();
        for k in 0..x.len() {
            let forcing = scratch[k] + bs[k] * z[k];
            x[k] = match self.scheme {
                Scheme::ExponentialEuler => self.decay[k] * x[k] + self.phi1_dt[k] * forcing,
                Scheme::EulerMaruyama => x[k] + self.dt * (-lam[k] * x[k] + forcing),
            };
            if self.noise_std[k] > 0.0 {
                x[k] += self.noise_std[k] * standard_normal(rng);
            }
        }
    }
}

/// One simulated trajectory: `states` holds `n_steps + 1` flattened
/// `m`-vectors, `controls` holds `n_steps` (control `n` acts on
/// `[t_n, t_{n+1})`). A blown-up path stops early.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathRecord {
    pub states: Vec<f64>,
    pub controls: Vec<f64>,
    pub blown_up: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathEnsemble {
    pub m: usize,
    pub policy: String,
    pub seed: u64,
    pub x0: Vec<f64>,
    pub integrator: IntegratorSpec,
    pub times: Vec<f64>,
    pub paths: Vec<PathRecord>,
    /// Controls that exceeded `R` and were clipped.
    pub clipped: u64,
    /// Feedback evaluations outside the value-grid box.
    pub excursions: u64,
}

impl PathEnsemble {
    pub fn n_paths(&self) -> usize {
        self.paths.len()
    }

    pub fn excluded(&self) -> usize {
        self.paths.iter().filter(|p| p.blown_up).count()
    }

    pub fn kept(&self) -> impl Iterator<Item = &PathRecord> {
        self.paths.iter().filter(|p| !p.blown_up)
    }

    pub fn state(&self, path: usize, n: usize) -> &[f64] {
        &self.paths[path].states[n * self.m..(n + 1) * self.m]
    }

    /// Largest recorded control norm.
    pub fn max_control_norm(&self) -> f64 {
        self.paths
            .iter()
            .flat_map(|p| p.controls.chunks(self.m))
            .map(|z| field::norm_sq(z).sqrt())
            .fold(0.0, f64::max)
    }
}

/// Simulates `n_paths` trajectories of `dX = (AX + b(X) + Bz) dt + Q^{1/2} dW`
/// under `policy`, clipping controls to the ball of radius `R`.
pub fn simulate_controlled(
    sys: &GalerkinSystem,
    policy: &dyn Policy,
    r: SaturationBound,
    x0: &SpectralField,
    integ: &IntegratorSpec,
    n_paths: usize,
    seed: u64,
) -> Result<PathEnsemble> {
    check_dim(sys.m(), x0.dim())?;
    let n_steps = integ.validate_for(sys)?;
    if n_paths == 0 {
        return Err(Error::InvalidParameter {
            name: "n_paths",
            value: 0.0,
            constraint: "must be >= 1".into(),
        });
    }
    let m = sys.m();
    let stepper = Stepper::new(sys, integ.scheme, integ.dt);
    let times = integ.times()?;
    let clipped = AtomicU64::new(0);
    let excursions_before = policy.excursions();
    let paths: Vec<PathRecord> = (0..n_paths as u64)
        .into_par_iter()
        .map(|i| {
            let mut noise = path_rng(seed, i);
            let mut ctl = path_rng(seed ^ CONTROL_STREAM_SALT, i);
            let mut x = x0.as_slice().to_vec();
            let mut z = vec![0.0; m];
            let mut scratch = vec![0.0; m];
            let mut states = Vec::with_capacity((n_steps + 1) * m);
            let mut controls = Vec::with_capacity(n_steps * m);
            states.extend_from_slice(&x);
            let mut blown_up = false;
            for n in 0..n_steps {
                policy.control(times[n], &x, &mut ctl, &mut z);
                let norm = field::norm_sq(&z).sqrt();
                if norm > r.value() {
                    clipped.fetch_add(1, Ordering::Relaxed);
                    let s = r.value() / norm;
                    z.iter_mut().for_each(|v| *v *= s);
                }
                controls.extend_from_slice(&z);
                stepper.step(&mut x, &z, &mut noise, &mut scratch);
                states.extend_from_slice(&x);
                let xn = field::norm_sq(&x).sqrt();
                if !(xn <= BLOW_UP_THRESHOLD) {
                    blown_up = true;
                    break;
                }
            }
            PathRecord {
                states,
                controls,
                blown_up,
            }
        })
        .collect();
    Ok(PathEnsemble {
        m,
        policy: policy.name(),
        seed,
        x0: x0.as_slice().to_vec(),
        integrator: *integ,
        times,
        paths,
        clipped: clipped.into_inner(),
        excursions: policy.excursions() - excursions_before,
    })
}

/// Closed loop under the feedback synthesized from `value`.
pub fn simulate_closed_loop(
    sys: &GalerkinSystem,
    value: &ValueGrid,
    r: SaturationBound,
    x0: &SpectralField,
    integ: &IntegratorSpec,
    n_paths: usize,
    seed: u64,
) -> Result<PathEnsemble> {
    let policy = FeedbackPolicy::new(sys, value, r, integ.horizon)?;
    simulate_controlled(sys, &policy, r, x0, integ, n_paths, seed)
}

/// Monte Carlo terms of the energy inequality
/// `E[sup|X|² + ∫‖X‖²] ≤ c (1 + |x|² + Tr Q)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub e_sup_sq: Estimate,
    pub e_int_v: Estimate,
    /// `1 + |x0|² + Tr Q`.
    pub bound_rhs: f64,
    /// `(E sup|X|² + E ∫‖X‖²) / bound_rhs`.
    pub c_emp: f64,
    pub c_emp_std_error: f64,
    pub n_used: usize,
}

pub fn energy_estimate(sys: &GalerkinSystem, ens: &PathEnsemble) -> Result<EnergyReport> {
    let lam = sys.lambdas();
    let m = ens.m;
    check_dim(sys.m(), m)?;
    let dt = ens.integrator.dt;
    let mut sups = Vec::new();
    let mut ints = Vec::new();
    let mut sums = Vec::new();
    for p in ens.kept() {
        let mut sup = 0.0f64;
        let vals: Vec<f64> = p
            .states
            .chunks(m)
            .map(|x| {
                sup = sup.max(field::norm_sq(x));
                field::weighted_norm_sq(x, lam, 1.0)
            })
            .collect();
        let int = trapezoid(&vals, dt);
        sups.push(sup);
        ints.push(int);
        sums.push(sup + int);
    }
    if sups.is_empty() {
        return Err(Error::Unsupported("every path was excluded".into()));
    }
    let rhs = 1.0 + field::norm_sq(&ens.x0) + sys.trace_q();
    let total = stats::estimate(&sums);
    Ok(EnergyReport {
        e_sup_sq: stats::estimate(&sups),
        e_int_v: stats::estimate(&ints),
        bound_rhs: rhs,
        c_emp: total.mean / rhs,
        c_emp_std_error: total.std_error / rhs,
        n_used: sups.len(),
    })
}

/// `θ_δ = (2δ + 1) / (2δ - 1)`.
pub fn theta(delta: f64) -> f64 {
    (2.0 * delta + 1.0) / (2.0 * delta - 1.0)
}

/// `E ∫ |(-A)^{(1+δ)/2} X|² / (1 + |(-A)^{δ/2} X|²)^{θ_δ} dt` for
/// `δ ∈ (1/2, min(1 + g, 1 + 2γ)]`.
pub fn theta_delta_diagnostic(ens: &PathEnsemble, sys: &GalerkinSystem, delta: f64) -> Result<Estimate> {
    let hyp = sys.hyp();
    let top = (1.0 + hyp.g).min(1.0 + 2.0 * hyp.gamma);
    if !(delta > 0.5 && delta <= top) {
        return Err(Error::InvalidParameter {
            name: "delta",
            value: delta,
            constraint: format!("must lie in (1/2, {top}]"),
        });
    }
    check_dim(sys.m(), ens.m)?;
    let th = theta(delta);
    let lam = sys.lambdas();
    let per_path: Vec<f64> = ens
        .kept()
        .map(|p| {
            let vals: Vec<f64> = p
                .states
                .chunks(ens.m)
                .map(|x| {
                    let num = field::weighted_norm_sq(x, lam, 1.0 + delta);
                    let den = 1.0 + field::weighted_norm_sq(x, lam, delta);
                    num / den.powf(th)
                })
                .collect();
            trapezoid(&vals, ens.integrator.dt)
        })
        .collect();
    if per_path.is_empty() {
        return Err(Error::Unsupported("every path was excluded".into()));
    }
    Ok(stats::estimate(&per_path))
}

pub(crate) fn trapezoid(vals: &[f64], dt: f64) -> f64 {
    match vals.len() {
        0 | 1 => 0.0,
        n => dt * (0.5 * (vals[0] + vals[n - 1]) + vals[1..n - 1].iter().sum::<f64>()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::galerkin::{build_torus_system, HypothesisParams};

    #[test]
    fn phi1_series_matches() {
        for z in [-1e-5f64, 1e-5, -0.5, 2.0] {
            let exact = if z.abs() < 1e-3 { 1.0 + z / 2.0 + z * z / 6.0 } else { (z.exp() - 1.0) / z };
            assert!((phi1(z) - exact).abs() < 1e-12);
        }
        assert_eq!(phi1(0.0), 1.0);
    }

    #[test]
    fn integrator_spec_validation() {
        assert!(IntegratorSpec::new(Scheme::ExponentialEuler, 0.3, 1.0).is_err());
        assert!(IntegratorSpec::new(Scheme::ExponentialEuler, 2.0, 1.0).is_err());
        let s = IntegratorSpec::new(Scheme::EulerMaruyama, 0.25, 1.0).unwrap();
        assert_eq!(s.n_steps().unwrap(), 4);
        let sys = build_torus_system(3, 1, HypothesisParams::default()).unwrap();
        assert!(s.validate_for(&sys).is_err());
    }

    #[test]
    fn theta_at_one_is_three() {
        assert_eq!(theta(1.0), 3.0);
    }

    #[test]
    fn random_policy_stays_in_ball() {
        let p = RandomPolicy(SaturationBound::new(0.7).unwrap());
        let mut rng = path_rng(3, 0);
        let mut z = [0.0; 3];
        for _ in 0..1000 {
            p.control(0.0, &[0.0; 3], &mut rng, &mut z);
            assert!(field::norm_sq(&z).sqrt() <= 0.7);
        }
    }
}
