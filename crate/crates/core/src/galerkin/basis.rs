//! Real eigenbases of the Stokes operator and exact convective integrals.
//!
//! Two domains are supported:
//!
//! * the periodic torus `[0, 2π)^d`, `d ∈ {2, 3}`, with real divergence-free
//!   modes `A · a · cos(k·ξ)` and `A · a · sin(k·ξ)` where `a ⊥ k`;
//! * the Dirichlet interval `[0, π]` with scalar modes `sqrt(2/π) sin(kξ)`,
//!   used as a Burgers-type surrogate. Its convective form is the
//!   skew-symmetric `b(x, y) = (2 x y' + x' y) / 3`, which reduces to `x x'`
//!   on the diagonal and satisfies `(b(x, y), y) = 0`.
//!
//! Structure tensor entries `T[i][j][k] = (b(e_i, e_j), e_k)` are computed from
//! closed-form trigonometric integrals; no quadrature is involved.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Trig {
    Cos,
    Sin,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Domain {
    /// `[0, π]` with homogeneous Dirichlet data.
    DirichletInterval,
    /// `[0, 2π)^d`.
    Torus(usize),
}

/// One real basis function `amplitude · polarization · trig(k·ξ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mode {
    pub wavevector: Vec<i32>,
    pub polarization: Vec<f64>,
    pub trig: Trig,
    pub amplitude: f64,
}

impl Mode {
    pub fn k_sq(&self) -> f64 {
        self.wavevector.iter().map(|&k| (k * k) as f64).sum()
    }
}

/// First `m` modes ordered by `|k|²`, ties broken lexicographically on the
/// wavevector, then by polarization, then cosine before sine.
pub fn modes(domain: Domain, m: usize) -> Vec<Mode> {
    match domain {
        Domain::DirichletInterval => (1..=m as i32)
            .map(|k| Mode {
                wavevector: vec![k],
                polarization: vec![1.0],
                trig: Trig::Sin,
                amplitude: (2.0 / PI).sqrt(),
            })
            .collect(),
        Domain::Torus(d) => torus_modes(d, m),
    }
}

fn torus_modes(d: usize, m: usize) -> Vec<Mode> {
    let amplitude = (2.0 / (2.0 * PI).powi(d as i32)).sqrt();
    let per_wavevector = if d == 2 { 2 } else { 4 };
    let mut radius = 1;
    loop {
        let mut ks = half_space_wavevectors(d, radius);
        // Only shells fully inside the enumeration radius are complete.
        let complete = (radius * radius) as f64;
        ks.retain(|k| k_sq(k) <= complete);
        if ks.len() * per_wavevector >= m {
            ks.sort_by(|a, b| k_sq(a).total_cmp(&k_sq(b)).then_with(|| a.cmp(b)));
            let mut out = Vec::with_capacity(m);
            'outer: for k in ks {
                for pol in polarizations(&k) {
                    for trig in [Trig::Cos, Trig::Sin] {
                        if out.len() == m {
                            break 'outer;
                        }
                        out.push(Mode {
                            wavevector: k.clone(),
                            polarization: pol.clone(),
                            trig,
                            amplitude,
                        });
                    }
                }
            }
            return out;
        }
        radius += 1;
    }
}

fn k_sq(k: &[i32]) -> f64 {
    k.iter().map(|&v| (v * v) as f64).sum()
}

/// Nonzero integer vectors in the box `[-r, r]^d` whose first nonzero
/// component is positive.
fn half_space_wavevectors(d: usize, r: i32) -> Vec<Vec<i32>> {
    let side = (2 * r + 1) as usize;
    let total = side.pow(d as u32);
    let mut out = Vec::new();
    for flat in 0..total {
        let mut rem = flat;
        let mut k = Vec::with_capacity(d);
        for _ in 0..d {
            k.push((rem % side) as i32 - r);
            rem /= side;
        }
        k.reverse();
        if let Some(first) = k.iter().find(|&&v| v != 0) {
            if *first > 0 {
                out.push(k);
            }
        }
    }
    out
}

fn polarizations(k: &[i32]) -> Vec<Vec<f64>> {
    let kf: Vec<f64> = k.iter().map(|&v| v as f64).collect();
    let norm = k_sq(k).sqrt();
    match k.len() {
        2 => vec![vec![-kf[1] / norm, kf[0] / norm]],
        3 => {
            // Reference axis least aligned with k.
            let mut axis = 0;
            for j in 1..3 {
                if kf[j].abs() < kf[axis].abs() {
                    axis = j;
                }
            }
            let mut e = [0.0; 3];
            e[axis] = 1.0;
            let a1 = normalize(cross(&kf, &e));
            let khat: Vec<f64> = kf.iter().map(|v| v / norm).collect();
            let a2 = normalize(cross(&khat, &a1));
            vec![a1, a2]
        }
        _ => unreachable!("torus dimension is 2 or 3"),
    }
}

fn cross(a: &[f64], b: &[f64]) -> Vec<f64> {
    vec![
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn normalize(v: Vec<f64>) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / n).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `∫ |curl e|²` over the domain (the derivative for the scalar interval
/// modes).
pub fn curl_weight(domain: Domain, mode: &Mode) -> f64 {
    let k: Vec<f64> = mode.wavevector.iter().map(|&v| v as f64).collect();
    let a = &mode.polarization;
    let amp_sq = mode.amplitude * mode.amplitude;
    match domain {
        // ∫_0^π (c k cos kξ)² dξ = c² k² π / 2
        Domain::DirichletInterval => amp_sq * k[0] * k[0] * PI / 2.0,
        Domain::Torus(d) => {
            let curl_sq = if d == 2 {
                let c = k[0] * a[1] - k[1] * a[0];
                c * c
            } else {
                cross(&k, a).iter().map(|v| v * v).sum()
            };
            amp_sq * curl_sq * (2.0 * PI).powi(d as i32) / 2.0
        }
    }
}

/// Complex amplitudes `(c₊, c₋)` of `trig(θ) = c₊ e^{iθ} + c₋ e^{-iθ}`,
/// as `(re, im)` pairs.
fn exp_coeffs(trig: Trig, derivative: bool) -> [(f64, f64); 2] {
    match (trig, derivative) {
        // cos
        (Trig::Cos, false) => [(0.5, 0.0), (0.5, 0.0)],
        // sin = (e^{iθ} - e^{-iθ}) / 2i
        (Trig::Sin, false) => [(0.0, -0.5), (0.0, 0.5)],
        // (cos)' = -sin
        (Trig::Cos, true) => [(0.0, 0.5), (0.0, -0.5)],
        // (sin)' = cos
        (Trig::Sin, true) => [(0.5, 0.0), (0.5, 0.0)],
    }
}

fn cmul(a: (f64, f64), b: (f64, f64)) -> (f64, f64) {
    (a.0 * b.0 - a.1 * b.1, a.0 * b.1 + a.1 * b.0)
}

/// `∫_{[0,2π)^d} f₁(k₁·ξ) f₂'(k₂·ξ) f₃(k₃·ξ) dξ`, where `f₂'` is the
/// derivative of the middle factor's trigonometric function.
fn torus_triple(
    d: usize,
    (t1, k1): (Trig, &[i32]),
    (t2, k2): (Trig, &[i32]),
    (t3, k3): (Trig, &[i32]),
) -> f64 {
    let c1 = exp_coeffs(t1, false);
    let c2 = exp_coeffs(t2, true);
    let c3 = exp_coeffs(t3, false);
    let signs = [1i32, -1i32];
    let mut acc = (0.0, 0.0);
    for (a, s1) in signs.iter().enumerate() {
        for (b, s2) in signs.iter().enumerate() {
            for (c, s3) in signs.iter().enumerate() {
                let resonant = (0..d).all(|n| s1 * k1[n] + s2 * k2[n] + s3 * k3[n] == 0);
                if resonant {
                    let p = cmul(cmul(c1[a], c2[b]), c3[c]);
                    acc.0 += p.0;
                    acc.1 += p.1;
                }
            }
        }
    }
    debug_assert!(acc.1.abs() < 1e-14, "triple product integral must be real");
    acc.0 * (2.0 * PI).powi(d as i32)
}

/// `∫_0^π sin(aξ) cos(bξ) sin(cξ) dξ` for positive integers.
fn interval_ssc(a: i32, b: i32, c: i32) -> f64 {
    let delta = |p: i32| if p == c { 1.0 } else { 0.0 };
    PI / 4.0 * (delta(a + b) + delta(a - b) - delta(b - a))
}

/// `(b(e_i, e_j), e_k)`.
pub fn structure_entry(domain: Domain, ei: &Mode, ej: &Mode, ek: &Mode) -> f64 {
    match domain {
        Domain::DirichletInterval => {
            let (a, b, c) = (ei.wavevector[0], ej.wavevector[0], ek.wavevector[0]);
            let amp3 = ei.amplitude * ej.amplitude * ek.amplitude;
            // (2 e_i e_j' + e_i' e_j, e_k) / 3
            amp3 / 3.0
                * (2.0 * b as f64 * interval_ssc(a, b, c) + a as f64 * interval_ssc(b, a, c))
        }
        Domain::Torus(d) => {
            let kj: Vec<f64> = ej.wavevector.iter().map(|&v| v as f64).collect();
            let transport = dot(&ei.polarization, &kj);
            let align = dot(&ej.polarization, &ek.polarization);
            if transport == 0.0 || align == 0.0 {
                return 0.0;
            }
            let integral = torus_triple(
                d,
                (ei.trig, &ei.wavevector),
                (ej.trig, &ej.wavevector),
                (ek.trig, &ek.wavevector),
            );
            ei.amplitude * ej.amplitude * ek.amplitude * transport * align * integral
        }
    }
}
