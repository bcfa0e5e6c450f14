use nshjb_core::cost::{CostDescriptor, CostSpec};
use nshjb_core::hamiltonian::SaturationBound;
use nshjb_core::hjb::{solve_hjb_grid, GridSpec};
use nshjb_core::io::{read_value_grid, write_paths_csv, write_value_grid};
use nshjb_core::sde::{simulate_controlled, IntegratorSpec, RandomPolicy, Scheme};
use nshjb_core::{build_torus_system, HypothesisParams, SpectralField};

#[test]
fn value_grid_round_trips_bit_exactly() {
    let hyp = HypothesisParams::default();
    let sys = build_torus_system(2, 1, hyp).unwrap();
    let cost = CostSpec::from_descriptors(
        &sys,
        CostDescriptor::RationalEnstrophy { cap: 1.0, modes: None },
        CostDescriptor::SaturatedEnstrophy { cap: 0.5, modes: Some(vec![0]) },
    )
    .unwrap();
    let r = SaturationBound::new(1.0).unwrap();
    let v = solve_hjb_grid(&sys, &cost, r, 0.25, &GridSpec::new(9, 4)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_value_grid(dir.path(), "u", &v, "abc123", Some(7), hyp, &cost).unwrap();
    let (header, back) = read_value_grid(dir.path(), "u").unwrap();
    assert_eq!(header.fingerprint, "abc123");
    assert_eq!(header.seed, Some(7));
    assert_eq!(header.time_slices, 4);
    assert_eq!(header.cost, cost);
    assert_eq!(back.times, v.times);
    assert_eq!(back.values, v.values);
    assert_eq!(back.lattice, v.lattice);

    let csv = std::fs::read_to_string(dir.path().join("u.csv")).unwrap();
    assert!(!csv.contains('\r'));
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("t,i_1,i_2,u,du_1,du_2"));
    assert_eq!(lines.count(), 5 * 81);
}

#[test]
fn path_dump_leaves_the_final_control_empty() {
    let sys = build_torus_system(2, 1, HypothesisParams::default()).unwrap();
    let cost = CostSpec::from_descriptors(
        &sys,
        CostDescriptor::Constant { value: 0.5 },
        CostDescriptor::Constant { value: 0.0 },
    )
    .unwrap();
    let r = SaturationBound::new(1.0).unwrap();
    let integ = IntegratorSpec::new(Scheme::ExponentialEuler, 0.25, 0.5).unwrap();
    let x0 = SpectralField::new(vec![0.1, 0.2]).unwrap();
    let ens = simulate_controlled(&sys, &RandomPolicy(r), r, &x0, &integ, 2, 0).unwrap();
    let mut buf = Vec::new();
    write_paths_csv(&mut buf, &ens, &cost).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let rows: Vec<&str> = text.lines().collect();
    assert_eq!(rows[0], "path,t,X_1,X_2,z_1,z_2,running_cost");
    assert_eq!(rows.len(), 1 + 2 * 3);
    assert!(rows[1].starts_with("0,0,0.1,0.2,"), "{}", rows[1]);
    assert!(rows[3].ends_with(",,,0.5"), "{}", rows[3]);
    assert!(rows[6].starts_with("1,0.5,"));
}
