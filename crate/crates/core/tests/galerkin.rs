use std::f64::consts::PI;

use nshjb_core::galerkin::basis::{Mode, Trig};
use nshjb_core::galerkin::{apply_fractional, bilinear, estimate_bilinear_constant, validate_hypotheses};
use nshjb_core::{build_torus_system, GalerkinSystem, HypothesisParams, SpectralField};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn trig(t: Trig, theta: f64) -> f64 {
    match t {
        Trig::Cos => theta.cos(),
        Trig::Sin => theta.sin(),
    }
}

fn trig_prime(t: Trig, theta: f64) -> f64 {
    match t {
        Trig::Cos => -theta.sin(),
        Trig::Sin => theta.cos(),
    }
}

fn phase(mode: &Mode, xi: &[f64]) -> f64 {
    mode.wavevector.iter().zip(xi).map(|(&k, x)| k as f64 * x).sum()
}

/// `∫ ((e_i·∇) e_j)·e_k` by the uniform rule on `[0, 2π)^d`, exact for
/// trigonometric polynomials of degree below `n`.
fn torus_oracle(modes: &[Mode], d: usize, n: usize) -> Vec<f64> {
    let m = modes.len();
    let h = 2.0 * PI / n as f64;
    let cell = h.powi(d as i32);
    let mut out = vec![0.0; m * m * m];
    let total = n.pow(d as u32);
    // Per point: field values, and the directional factor trig'(k_j·ξ).
    for flat in 0..total {
        let mut rem = flat;
        let xi: Vec<f64> = (0..d)
            .map(|_| {
                let i = rem % n;
                rem /= n;
                i as f64 * h
            })
            .collect();
        let vals: Vec<Vec<f64>> = modes
            .iter()
            .map(|md| {
                let s = md.amplitude * trig(md.trig, phase(md, &xi));
                md.polarization.iter().map(|a| a * s).collect()
            })
            .collect();
        let dvals: Vec<f64> = modes
            .iter()
            .map(|md| md.amplitude * trig_prime(md.trig, phase(md, &xi)))
            .collect();
        for i in 0..m {
            for j in 0..m {
                let transport: f64 = (0..d).map(|c| vals[i][c] * modes[j].wavevector[c] as f64).sum();
                if transport == 0.0 {
                    continue;
                }
                for k in 0..m {
                    let align: f64 = (0..d).map(|c| modes[j].polarization[c] * vals[k][c]).sum();
                    out[(i * m + j) * m + k] += cell * transport * dvals[j] * align;
                }
            }
        }
    }
    out
}

/// `∫_0^π (2 e_i e_j' + e_i' e_j) e_k / 3` for `e_k = c sin(kξ)`. The
/// integrand is even and 2π-periodic, so it is half the full-period rule.
fn interval_oracle(m: usize, n: usize) -> Vec<f64> {
    let c = (2.0 / PI).sqrt();
    let h = 2.0 * PI / n as f64;
    let mut out = vec![0.0; m * m * m];
    for p in 0..n {
        let xi = p as f64 * h;
        let e: Vec<f64> = (1..=m).map(|k| c * (k as f64 * xi).sin()).collect();
        let de: Vec<f64> = (1..=m).map(|k| c * k as f64 * (k as f64 * xi).cos()).collect();
        for i in 0..m {
            for j in 0..m {
                let b = (2.0 * e[i] * de[j] + de[i] * e[j]) / 3.0;
                for k in 0..m {
                    out[(i * m + j) * m + k] += 0.5 * h * b * e[k];
                }
            }
        }
    }
    out
}

fn assert_tensor_matches(sys: &GalerkinSystem, oracle: &[f64]) {
    let m = sys.m();
    let mut worst = 0.0f64;
    for i in 0..m {
        for j in 0..m {
            for k in 0..m {
                let err = (sys.tensor().get(i, j, k) - oracle[(i * m + j) * m + k]).abs();
                worst = worst.max(err);
            }
        }
    }
    assert!(worst <= 1e-10, "worst tensor mismatch {worst:e}");
}

#[test]
fn torus_3d_tensor_matches_quadrature() {
    for m in [8, 16, 32] {
        let sys = build_torus_system(m, 3, HypothesisParams::default()).unwrap();
        let oracle = torus_oracle(sys.modes(), 3, 8);
        assert_tensor_matches(&sys, &oracle);
        if m == 32 {
            assert!(!sys.tensor().is_zero(), "shell-2 modes must interact");
        }
    }
}

#[test]
fn torus_2d_tensor_matches_quadrature() {
    let sys = build_torus_system(20, 2, HypothesisParams::default()).unwrap();
    let oracle = torus_oracle(sys.modes(), 2, 16);
    assert_tensor_matches(&sys, &oracle);
    assert!(!sys.tensor().is_zero());
}

#[test]
fn interval_tensor_matches_quadrature() {
    let sys = build_torus_system(10, 1, HypothesisParams::default()).unwrap();
    let oracle = interval_oracle(10, 64);
    assert_tensor_matches(&sys, &oracle);
    // (b(e_1, e_1), e_2) in 0-based indexing is T[0][0][1].
    assert!(sys.tensor().get(0, 0, 1).abs() > 0.1);
}

#[test]
fn single_lowest_mode_has_no_self_interaction() {
    for d in 1..=3 {
        let sys = build_torus_system(1, d, HypothesisParams::default()).unwrap();
        assert!(sys.tensor().is_zero());
    }
}

#[test]
fn lowest_3d_curl_weight_matches_quadrature() {
    let sys = build_torus_system(1, 3, HypothesisParams::default()).unwrap();
    let md = &sys.modes()[0];
    let n = 8;
    let h = 2.0 * PI / n as f64;
    let mut acc = 0.0;
    for flat in 0..n * n * n {
        let xi = [(flat % n) as f64 * h, ((flat / n) % n) as f64 * h, (flat / (n * n)) as f64 * h];
        let s = md.amplitude * trig_prime(md.trig, phase(md, &xi));
        let k: Vec<f64> = md.wavevector.iter().map(|&v| v as f64).collect();
        let a = &md.polarization;
        // curl(a · f(k·ξ)) = f'(k·ξ) (k × a)
        let c = [k[1] * a[2] - k[2] * a[1], k[2] * a[0] - k[0] * a[2], k[0] * a[1] - k[1] * a[0]];
        acc += h.powi(3) * s * s * c.iter().map(|v| v * v).sum::<f64>();
    }
    assert!((sys.curl_weights()[0] - acc).abs() < 1e-12);
    assert!((acc - sys.lambdas()[0]).abs() < 1e-12);
}

#[test]
fn energy_conservation_over_random_fields() {
    let sys = build_torus_system(8, 3, HypothesisParams::default()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..10_000 {
        let x: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
        let x = SpectralField::new(x).unwrap();
        let y = SpectralField::new(y).unwrap();
        let b = bilinear(&sys, &x, &y).unwrap();
        let scale = x.norm() * y.v_norm(sys.lambdas()) * y.norm();
        assert!(b.dot(&y).abs() <= 1e-12 * scale);
    }
}

#[test]
fn bilinear_of_zero_is_zero() {
    let sys = build_torus_system(16, 3, HypothesisParams::default()).unwrap();
    let y = SpectralField::new((0..16).map(|k| k as f64).collect()).unwrap();
    let b = bilinear(&sys, &SpectralField::zeros(16), &y).unwrap();
    assert!(b.as_slice().iter().all(|&v| v == 0.0));
}

#[test]
fn bilinear_rejects_dimension_mismatch() {
    let sys = build_torus_system(4, 2, HypothesisParams::default()).unwrap();
    assert!(bilinear(&sys, &SpectralField::zeros(3), &SpectralField::zeros(4)).is_err());
}

#[test]
fn fractional_power_examples() {
    let sys = build_torus_system(32, 3, HypothesisParams::default()).unwrap();
    let x = SpectralField::new((0..32).map(|k| 1.0 + k as f64).collect()).unwrap();
    assert_eq!(apply_fractional(&sys, 0.0, &x).unwrap(), x);
    let back = apply_fractional(&sys, -1.0, &apply_fractional(&sys, 1.0, &x).unwrap()).unwrap();
    for k in 0..32 {
        assert!((back[k] - x[k]).abs() <= 1e-14 * x[k].abs());
    }
    let half = apply_fractional(&sys, 0.5, &apply_fractional(&sys, 0.5, &x).unwrap()).unwrap();
    let one = apply_fractional(&sys, 1.0, &x).unwrap();
    for k in 0..32 {
        assert!((half[k] - one[k]).abs() <= 1e-14 * one[k].abs());
    }
}

#[test]
fn hypothesis_gate() {
    let sys = build_torus_system(16, 3, HypothesisParams::default()).unwrap();
    let report = validate_hypotheses(&sys);
    assert!(report.passed(), "{:?}", report.violations());
    assert!(report.trace_summable);

    let hyp = HypothesisParams::new(0.2, 1.25, 0.5).unwrap();
    assert_eq!(hyp.epsilon(), 0.25);
    // 1 + g - 2r = -1.3 is summable only below three dimensions.
    let sys = build_torus_system(16, 1, hyp).unwrap();
    let report = validate_hypotheses(&sys);
    let names: Vec<&str> = report.violations().iter().map(|c| c.name.as_str()).collect();
    assert_eq!(names, ["gamma_smoothing"]);
    assert!(HypothesisParams::strict(0.2, 1.25, 0.5).is_err());
    assert!(HypothesisParams::strict(0.2, 1.25, 0.76).is_ok());
}

#[test]
fn lemma_constant_is_stable_under_doubling() {
    let sys = build_torus_system(16, 3, HypothesisParams::default()).unwrap();
    let c1 = estimate_bilinear_constant(&sys, 10_000, 3);
    let c2 = estimate_bilinear_constant(&sys, 20_000, 4);
    assert!(c1.is_finite() && c1 > 0.0);
    assert!((c2 - c1).abs() < 0.2 * c1, "{c1} vs {c2}");
}

fn field(m: usize) -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(-10.0f64..10.0, m)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn tensor_is_antisymmetric(d in 1usize..=3, m in 1usize..=24) {
        let sys = build_torus_system(m, d, HypothesisParams::default()).unwrap();
        for i in 0..m {
            for j in 0..m {
                for k in 0..m {
                    prop_assert_eq!(sys.tensor().get(i, j, k), -sys.tensor().get(i, k, j));
                }
            }
        }
    }

    #[test]
    fn convective_term_conserves_energy(x in field(12), y in field(12)) {
        let sys = build_torus_system(12, 2, HypothesisParams::default()).unwrap();
        let x = SpectralField::new(x).unwrap();
        let y = SpectralField::new(y).unwrap();
        let b = bilinear(&sys, &x, &y).unwrap();
        let scale = x.norm() * y.v_norm(sys.lambdas()) * y.norm();
        prop_assert!(b.dot(&y).abs() <= 1e-12 * scale.max(f64::MIN_POSITIVE));
    }

    #[test]
    fn bilinear_is_linear_in_first_argument(
        x in field(8), z in field(8), y in field(8), a in -4.0f64..4.0, c in -4.0f64..4.0,
    ) {
        let sys = build_torus_system(8, 1, HypothesisParams::default()).unwrap();
        let (x, z, y) = (SpectralField::new(x).unwrap(), SpectralField::new(z).unwrap(), SpectralField::new(y).unwrap());
        let lhs = bilinear(&sys, &x.lin_comb(a, &z, c), &y).unwrap();
        let bx = bilinear(&sys, &x, &y).unwrap();
        let bz = bilinear(&sys, &z, &y).unwrap();
        let rhs = bx.lin_comb(a, &bz, c);
        let scale = (x.norm() * a.abs() + z.norm() * c.abs()) * y.v_norm(sys.lambdas()) + 1.0;
        for k in 0..8 {
            prop_assert!((lhs[k] - rhs[k]).abs() <= 1e-13 * scale);
        }
    }

    #[test]
    fn fractional_powers_compose(x in field(16), s1 in -2.0f64..2.0, s2 in -2.0f64..2.0) {
        let sys = build_torus_system(16, 3, HypothesisParams::default()).unwrap();
        let x = SpectralField::new(x).unwrap();
        let two = apply_fractional(&sys, s1, &apply_fractional(&sys, s2, &x).unwrap()).unwrap();
        let one = apply_fractional(&sys, s1 + s2, &x).unwrap();
        for k in 0..16 {
            prop_assert!((two[k] - one[k]).abs() <= 1e-13 * one[k].abs());
        }
    }

    #[test]
    fn epsilon_lies_in_open_half_interval(r in 1.0001f64..1.4999) {
        let hyp = HypothesisParams::new(0.2, r, 1.0).unwrap();
        prop_assert!(hyp.epsilon() > 0.0 && hyp.epsilon() < 0.5);
    }
}
