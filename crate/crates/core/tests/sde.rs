use nshjb_core::cost::{CostDescriptor, CostSpec};
use nshjb_core::hamiltonian::SaturationBound;
use nshjb_core::hjb::riccati::LqProblem;
use nshjb_core::hjb::{solve_hjb_grid, GridSpec};
use nshjb_core::ou::ou_variance;
use nshjb_core::sde::{
    energy_estimate, phi1, simulate_closed_loop, simulate_controlled, theta, theta_delta_diagnostic, ConstantPolicy,
    FeedbackPolicy, IntegratorSpec, Policy, RandomPolicy, Scheme, ZeroPolicy,
};
use nshjb_core::stats;
use nshjb_core::{build_torus_system, Error, GalerkinSystem, HypothesisParams, SpectralField};

fn norm_sq(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

fn r1() -> SaturationBound {
    SaturationBound::new(1.0).unwrap()
}

fn quiet(m: usize, d: usize) -> GalerkinSystem {
    build_torus_system(m, d, HypothesisParams::default())
        .unwrap()
        .with_noise(false)
        .with_bilinear(false)
}

#[test]
fn phi1_is_smooth_across_the_series_switch() {
    assert_eq!(phi1(0.0), 1.0);
    for z in [-2e-4, -1e-4, -0.99e-4, 1e-4, 1.01e-4] {
        let exact = (z as f64).exp_m1() / z;
        assert!((phi1(z) - exact).abs() < 1e-15, "z = {z}");
    }
}

#[test]
fn exponential_euler_is_exact_on_the_linear_flow() {
    let sys = quiet(4, 1);
    let x0 = SpectralField::new(vec![1.0, -0.5, 0.25, 2.0]).unwrap();
    let integ = IntegratorSpec::new(Scheme::ExponentialEuler, 0.01, 0.1).unwrap();
    let ens = simulate_controlled(&sys, &ZeroPolicy, r1(), &x0, &integ, 1, 0).unwrap();
    for (n, t) in ens.times.iter().enumerate() {
        let x = ens.state(0, n);
        for k in 0..4 {
            let exact = (-sys.lambdas()[k] * t).exp() * x0[k];
            assert!((x[k] - exact).abs() <= 1e-14 * x0[k].abs(), "n = {n}, k = {k}");
        }
    }
}

/// Global and largest per-step defects of `|X|² + 2∫‖X‖² = |x0|²` on a
/// noiseless uncontrolled run with the bilinear term on.
fn energy_defects(dt: f64) -> (f64, f64) {
    let sys = build_torus_system(4, 1, HypothesisParams::default()).unwrap().with_noise(false);
    let lam = sys.lambdas().to_vec();
    let x0 = SpectralField::new(vec![1.5, -1.0, 0.8, 0.3]).unwrap();
    let integ = IntegratorSpec::new(Scheme::ExponentialEuler, dt, 0.5).unwrap();
    let ens = simulate_controlled(&sys, &ZeroPolicy, r1(), &x0, &integ, 1, 0).unwrap();
    let e = energy_estimate(&sys, &ens).unwrap();
    let last = ens.state(0, ens.times.len() - 1);
    let global = (norm_sq(last) + 2.0 * e.e_int_v.mean - x0.norm_sq()).abs();
    let v = |x: &[f64]| x.iter().zip(&lam).map(|(a, l)| l * a * a).sum::<f64>();
    let mut local = 0.0f64;
    for n in 0..ens.times.len() - 1 {
        let (a, b) = (ens.state(0, n), ens.state(0, n + 1));
        // |X|² never increases along the path.
        assert!(norm_sq(b) <= norm_sq(a) + 1e-10);
        local = local.max((norm_sq(b) + dt * (v(a) + v(b)) - norm_sq(a)).abs());
    }
    (global, local)
}

#[test]
fn energy_identity_defects_shrink_with_dt() {
    let sys = build_torus_system(4, 1, HypothesisParams::default()).unwrap();
    assert!(!sys.tensor().is_zero());
    let d: Vec<(f64, f64)> = [0.01, 0.005, 0.0025].iter().map(|&dt| energy_defects(dt)).collect();
    for w in d.windows(2) {
        // Per step O(dt²); summed over T/dt steps, O(dt).
        let local = (w[0].1 / w[1].1).log2();
        let global = (w[0].0 / w[1].0).log2();
        assert!(local > 1.8, "local slope {local} from {d:?}");
        assert!(global > 0.8, "global slope {global} from {d:?}");
    }
}

#[test]
fn euler_maruyama_has_weak_order_one() {
    let sys = build_torus_system(1, 1, HypothesisParams::default()).unwrap().with_bilinear(false);
    let (lam, q) = (sys.lambdas()[0], sys.q_spectrum()[0]);
    // A large start makes the bias dominate the Monte Carlo error.
    let x0 = SpectralField::new(vec![3.0]).unwrap();
    let t = 1.0;
    let exact = 9.0 * (-2.0 * lam * t).exp() + ou_variance(lam, q, t);
    let second_moment = |scheme, dt| {
        let integ = IntegratorSpec::new(scheme, dt, t).unwrap();
        let ens = simulate_controlled(&sys, &ZeroPolicy, r1(), &x0, &integ, 400_000, 21).unwrap();
        let last = ens.times.len() - 1;
        let v: Vec<f64> = (0..ens.n_paths()).map(|p| ens.state(p, last)[0].powi(2)).collect();
        stats::estimate(&v)
    };
    let errs: Vec<f64> = [0.2, 0.1, 0.05]
        .iter()
        .map(|&dt| (second_moment(Scheme::EulerMaruyama, dt).mean - exact).abs())
        .collect();
    for w in errs.windows(2) {
        let slope = (w[0] / w[1]).log2();
        assert!((0.7..=1.3).contains(&slope), "slope {slope} from {errs:?}");
    }
    let ee = second_moment(Scheme::ExponentialEuler, 0.2);
    assert!((ee.mean - exact).abs() <= 4.0 * ee.std_error);
}

#[test]
fn euler_maruyama_step_limit() {
    let sys = build_torus_system(4, 1, HypothesisParams::default()).unwrap();
    let integ = IntegratorSpec::new(Scheme::EulerMaruyama, 0.25, 1.0).unwrap();
    let x0 = SpectralField::zeros(4);
    assert!(simulate_controlled(&sys, &ZeroPolicy, r1(), &x0, &integ, 1, 0).is_err());
    assert!(IntegratorSpec::new(Scheme::ExponentialEuler, 0.3, 1.0).is_err());
    assert!(IntegratorSpec::new(Scheme::ExponentialEuler, 2.0, 1.0).is_err());
}

#[test]
fn deterministic_energy_terms_match_closed_form() {
    let sys = quiet(3, 1);
    let x0 = SpectralField::new(vec![1.0, 0.5, -0.25]).unwrap();
    let t = 1.0;
    let integ = IntegratorSpec::new(Scheme::ExponentialEuler, 0.001, t).unwrap();
    let ens = simulate_controlled(&sys, &ZeroPolicy, r1(), &x0, &integ, 2, 0).unwrap();
    let e = energy_estimate(&sys, &ens).unwrap();
    let int: f64 = (0..3)
        .map(|k| {
            let l = sys.lambdas()[k];
            x0[k] * x0[k] * l * (1.0 - (-2.0 * l * t).exp()) / (2.0 * l)
        })
        .sum();
    assert_eq!(e.e_sup_sq.mean, x0.norm_sq());
    assert!((e.e_int_v.mean - int).abs() < 1e-3);
    assert_eq!(e.e_int_v.std_error, 0.0);
    assert_eq!(e.bound_rhs, 1.0 + x0.norm_sq());
}

#[test]
fn noisy_run_from_rest_has_finite_constant() {
    let sys = build_torus_system(8, 3, HypothesisParams::default()).unwrap();
    let integ = IntegratorSpec::new(Scheme::ExponentialEuler, 0.01, 1.0).unwrap();
    let ens = simulate_controlled(&sys, &ZeroPolicy, r1(), &SpectralField::zeros(8), &integ, 200, 4).unwrap();
    let e = energy_estimate(&sys, &ens).unwrap();
    assert!(e.c_emp.is_finite() && e.c_emp > 0.0);
    assert_eq!(e.bound_rhs, 1.0 + sys.trace_q());
    assert!(e.e_sup_sq.mean <= e.c_emp * (1.0 + sys.trace_q()));
    assert_eq!(ens.excluded(), 0);
}

#[test]
fn theta_diagnostic_examples() {
    assert_eq!(theta(1.0), 3.0);
    let sys = quiet(4, 1);
    let integ = IntegratorSpec::new(Scheme::ExponentialEuler, 0.01, 0.5).unwrap();
    let ens = simulate_controlled(&sys, &ZeroPolicy, r1(), &SpectralField::zeros(4), &integ, 3, 0).unwrap();
    let est = theta_delta_diagnostic(&ens, &sys, 1.0).unwrap();
    assert_eq!((est.mean, est.std_error), (0.0, 0.0));
    // g = 0.2 and γ = 1 put the top of the range at 1.2.
    assert!(theta_delta_diagnostic(&ens, &sys, 0.5).is_err());
    assert!(theta_delta_diagnostic(&ens, &sys, 1.2).is_ok());
    assert!(theta_delta_diagnostic(&ens, &sys, 1.2000001).is_err());
    let low_gamma = build_torus_system(4, 1, HypothesisParams::new(0.2, 1.4, 0.05).unwrap()).unwrap();
    assert!(theta_delta_diagnostic(&ens, &low_gamma, 1.15).is_err());
}

#[test]
fn controls_are_clipped_and_counted() {
    let sys = build_torus_system(2, 1, HypothesisParams::default()).unwrap();
    let r = SaturationBound::new(0.5).unwrap();
    let integ = IntegratorSpec::new(Scheme::ExponentialEuler, 0.05, 0.5).unwrap();
    let x0 = SpectralField::zeros(2);
    let ens = simulate_controlled(&sys, &ConstantPolicy(vec![3.0, 4.0]), r, &x0, &integ, 5, 0).unwrap();
    assert_eq!(ens.clipped, 5 * 10);
    assert!(ens.max_control_norm() <= 0.5);
    let ens = simulate_controlled(&sys, &RandomPolicy(r), r, &x0, &integ, 50, 0).unwrap();
    assert_eq!(ens.clipped, 0);
    assert!(ens.max_control_norm() <= 0.5);
}

#[test]
fn runaway_paths_are_excluded() {
    let sys = build_torus_system(2, 1, HypothesisParams::default()).unwrap();
    let integ = IntegratorSpec::new(Scheme::ExponentialEuler, 0.1, 1.0).unwrap();
    let x0 = SpectralField::new(vec![1e7, 0.0]).unwrap();
    let ens = simulate_controlled(&sys, &ZeroPolicy, r1(), &x0, &integ, 4, 0).unwrap();
    assert_eq!(ens.excluded(), 4);
    assert!(energy_estimate(&sys, &ens).is_err());
}

#[test]
fn flat_value_gives_uncontrolled_paths() {
    let sys = build_torus_system(2, 1, HypothesisParams::default()).unwrap();
    let cost = CostSpec::from_descriptors(
        &sys,
        CostDescriptor::Constant { value: 0.0 },
        CostDescriptor::Constant { value: 0.4 },
    )
    .unwrap();
    let v = solve_hjb_grid(&sys, &cost, r1(), 0.5, &GridSpec::new(11, 4)).unwrap();
    let x0 = SpectralField::new(vec![0.3, -0.1]).unwrap();
    let integ = IntegratorSpec::new(Scheme::ExponentialEuler, 0.01, 0.5).unwrap();
    let closed = simulate_closed_loop(&sys, &v, r1(), &x0, &integ, 20, 8).unwrap();
    let open = simulate_controlled(&sys, &ZeroPolicy, r1(), &x0, &integ, 20, 8).unwrap();
    assert_eq!(closed.paths.iter().map(|p| &p.states).collect::<Vec<_>>(), open.paths.iter().map(|p| &p.states).collect::<Vec<_>>());
    assert_eq!(closed.max_control_norm(), 0.0);

    let long = IntegratorSpec::new(Scheme::ExponentialEuler, 0.01, 1.0).unwrap();
    assert!(matches!(
        simulate_closed_loop(&sys, &v, r1(), &x0, &long, 1, 0),
        Err(Error::HorizonTooShort { .. })
    ));
}

#[test]
fn lq_feedback_matches_riccati_law() {
    let sys = build_torus_system(1, 1, HypothesisParams::new(0.2, 1.4, 0.0).unwrap())
        .unwrap()
        .with_bilinear(false);
    let q = CostDescriptor::Quadratic { diag: vec![1.0] };
    let cost = CostSpec::from_descriptors(&sys, q.clone(), q).unwrap();
    let r = SaturationBound::new(1e6).unwrap();
    let t = 0.5;
    let v = solve_hjb_grid(&sys, &cost, r, t, &GridSpec::new(41, 20)).unwrap();
    let oracle = LqProblem::from_system(&sys, &cost).unwrap().solve(t, 4000).unwrap();
    let policy = FeedbackPolicy::new(&sys, &v, r, t).unwrap();
    let mut rng = nshjb_core::rng::path_rng(0, 0);
    let half = v.lattice.half_width[0];
    for &s in &[0.0, 0.125, 0.25, 0.375] {
        for &x in &[-0.5 * half, -0.2 * half, 0.3 * half, 0.5 * half] {
            let mut z = [0.0];
            policy.control(s, &[x], &mut rng, &mut z);
            let expect = oracle.optimal_control(t, s, &[x])[0];
            assert!((z[0] - expect).abs() <= 0.03 * expect.abs(), "t = {s}, x = {x}: {} vs {expect}", z[0]);
        }
    }
}

#[test]
fn ensembles_do_not_depend_on_thread_count() {
    let sys = build_torus_system(8, 1, HypothesisParams::default()).unwrap();
    let x0 = SpectralField::new(vec![0.5; 8]).unwrap();
    let integ = IntegratorSpec::new(Scheme::ExponentialEuler, 0.01, 0.5).unwrap();
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| simulate_controlled(&sys, &RandomPolicy(r1()), r1(), &x0, &integ, 64, 99).unwrap())
    };
    let a = run(1);
    let b = run(4);
    let c = run(1);
    assert_eq!(a.paths, b.paths);
    assert_eq!(a.paths, c.paths);
}
