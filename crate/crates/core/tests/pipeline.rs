use eigendamage::{
    cantor_staircase, energy_eps, energy_f, energy_limit, energy_limit_bc, flat_distance, flat_norm, jump_localization,
    minimize_energy_eps, recovery_domain, recovery_sequence, run_convergence_experiment, select_grid, solve_g_given_u,
    BVDisplacement, CellField, ConstitutiveParams, Domain, EnergyBreakdown, Error, GridDisplacement, Jump, Measure1D,
    QuadratureSpec, SolveOptions, DEFAULT_SHIFT_SAMPLES,
};
use proptest::prelude::*;

fn p2() -> ConstitutiveParams {
    ConstitutiveParams::new(2.0, 10.0).unwrap()
}

fn unit(n: usize) -> Domain {
    Domain::new(0.0, 1.0, n).unwrap()
}

fn round_trip<T: serde::Serialize + serde::de::DeserializeOwned + PartialEq + std::fmt::Debug>(v: &T) {
    let s = serde_json::to_string(v).unwrap();
    let back: T = serde_json::from_str(&s).unwrap();
    assert_eq!(&back, v);
}

#[test]
fn serde_round_trips() {
    let d = unit(9);
    round_trip(&p2());
    round_trip(&d);
    round_trip(&QuadratureSpec::new(3).unwrap());
    round_trip(&SolveOptions { prox_step: Some(0.01), ..SolveOptions::default() });
    round_trip(&cantor_staircase(2, d).unwrap());
    round_trip(&GridDisplacement::affine(d, 1.0, 2.0));
    round_trip(&Measure1D::atom(d, 0.3, 2.0).unwrap());
    let e = energy_limit(&BVDisplacement::affine(d, 0.0, 1.0), &CellField::zeros(d), &p2()).unwrap();
    round_trip(&e);
    round_trip(&EnergyBreakdown::infinite());
    round_trip(&flat_norm(&Measure1D::atom(d, 0.5, 1.0).unwrap(), 2).unwrap());
}

#[test]
fn infinite_energy_serializes_as_string() {
    let s = serde_json::to_string(&EnergyBreakdown::infinite()).unwrap();
    assert!(s.contains("\"inf\""));
}

#[test]
fn invalid_json_values_are_rejected() {
    assert!(serde_json::from_str::<ConstitutiveParams>(r#"{"c0": 0, "k": 1}"#).is_err());
    assert!(serde_json::from_str::<Domain>(r#"{"a": 1, "b": 0, "n": 3}"#).is_err());
    assert!(serde_json::from_str::<QuadratureSpec>(r#"{"subcells_per_cell": 0}"#).is_err());
    let bad_cells = r#"{"domain": {"a": 0, "b": 1, "n": 3}, "cells": [1, 2]}"#;
    assert!(serde_json::from_str::<CellField>(bad_cells).is_err());
}

#[test]
fn solver_report_is_consistent_with_energy() {
    let p = p2();
    let q = QuadratureSpec::default();
    let d = unit(60);
    let r = minimize_energy_eps(0.0, 3.0, 0.1, &p, q, &SolveOptions::default(), d).unwrap();
    let e = energy_eps(&r.u, &r.g, &p, 0.1, q).unwrap();
    assert!((e.total - r.breakdown.total).abs() < 1e-12);
    assert_eq!(r.u.nodes()[0], 0.0);
    assert!((r.u.nodes()[60] - 3.0).abs() < 1e-12);
    assert!(r.energy_trace.windows(2).all(|w| w[1] <= w[0]));
    let first = *r.energy_trace.first().unwrap();
    assert!(r.breakdown.total <= first + 1e-12);
}

#[test]
fn g_step_never_beats_the_lower_bound_of_zero() {
    let p = p2();
    let u = GridDisplacement::from_fn(unit(30), |x| (6.0 * x).sin()).unwrap();
    let g = solve_g_given_u(&u, 0.05, &p, QuadratureSpec::default(), &SolveOptions::default()).unwrap();
    let e = energy_eps(&u, &g, &p, 0.05, QuadratureSpec::default()).unwrap();
    let e0 = energy_eps(&u, &CellField::zeros(unit(30)), &p, 0.05, QuadratureSpec::default()).unwrap();
    assert!(e.total >= 0.0 && e.total <= e0.total + 1e-12);
}

#[test]
fn recovery_pair_localizes_on_the_jump() {
    let p = p2();
    let d = unit(10);
    let u = BVDisplacement::pure_jump(d, 0.0, vec![Jump { position: 0.5, amplitude: 3.0 }]).unwrap();
    let eps = 0.02;
    let fine = recovery_domain(&d, eps).unwrap();
    let (ue, ge) = recovery_sequence(&u, &CellField::zeros(d), eps, &fine).unwrap();
    let bad = jump_localization(&ue, &ge, eps, &p).unwrap();
    assert!(!bad.is_empty());
    assert!(bad.iter().any(|&(lo, hi)| lo <= 0.5 && 0.5 <= hi));
    let total: f64 = bad.iter().map(|(lo, hi)| hi - lo).sum();
    assert!(total <= 4.0 * eps + 2.0 * eps * eps + 1e-9);
    let s = select_grid(&ge, eps, &p, DEFAULT_SHIFT_SAMPLES).unwrap();
    assert!(s.passed);
}

#[test]
fn boundary_variant_adds_only_penalties() {
    let p = p2();
    let d = unit(8);
    let u = BVDisplacement::affine(d, 0.0, 0.5);
    let g = CellField::zeros(d);
    let free = energy_limit(&u, &g, &p).unwrap();
    let bc = energy_limit_bc(&u, &g, &p, 0.0, 0.5).unwrap();
    assert_eq!(bc.boundary_penalty, 0.0);
    assert!((bc.total - free.total).abs() < 1e-15);
    let off = energy_limit_bc(&u, &g, &p, 1.0, 0.5).unwrap();
    assert!((off.boundary_penalty - 2.0 * 2.0 * 0.5).abs() < 1e-12);
}

#[test]
fn ladder_errors_are_reported() {
    let d = unit(4);
    let u = BVDisplacement::affine(d, 0.0, 0.0);
    let g = CellField::zeros(d);
    let q = QuadratureSpec::default();
    assert!(run_convergence_experiment(&u, &g, &[], &p2(), q, 1).is_err());
    assert!(run_convergence_experiment(&u, &g, &[0.1, 0.2], &p2(), q, 1).is_err());
    let big = run_convergence_experiment(
        &BVDisplacement::pure_jump(d, 0.0, vec![Jump { position: 0.5, amplitude: 1.0 }]).unwrap(),
        &g,
        &[0.45],
        &p2(),
        q,
        1,
    );
    assert!(matches!(big, Err(Error::AtEps { .. })));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn f_is_the_infimum_over_g(
        slopes in prop::collection::vec(-4.0f64..4.0, 1..20),
        gs in prop::collection::vec(-4.0f64..4.0, 20),
    ) {
        let p = p2();
        let d = unit(slopes.len());
        let u = BVDisplacement::new(d, CellField::new(d, slopes.clone()).unwrap(), vec![], vec![0.0; slopes.len()], 0.0).unwrap();
        let g = CellField::new(d, gs[..slopes.len()].to_vec()).unwrap();
        let f = energy_f(&u, &p).unwrap().total;
        let e = energy_limit(&u, &g, &p).unwrap().total;
        prop_assert!(f <= e + 1e-12);
    }

    #[test]
    fn flat_distance_is_symmetric(
        a in prop::collection::vec(-3.0f64..3.0, 6),
        b in prop::collection::vec(-3.0f64..3.0, 6),
        x in 0.05f64..0.95,
    ) {
        let d = unit(6);
        let mu = Measure1D::new(d, vec![eigendamage::Atom { position: x, weight: 1.0 }], CellField::new(d, a).unwrap()).unwrap();
        let nu = Measure1D::from_density(CellField::new(d, b).unwrap());
        let ab = flat_distance(&mu, &nu, 3).unwrap();
        let ba = flat_distance(&nu, &mu, 3).unwrap();
        prop_assert!((ab - ba).abs() <= 1e-12 * ab.max(1.0));
    }

    #[test]
    fn energy_eps_is_even_in_g(
        gs in prop::collection::vec(-5.0f64..5.0, 12),
        eps in 0.02f64..0.3,
    ) {
        let p = p2();
        let d = unit(12);
        let u = GridDisplacement::affine(d, 0.0, 0.0);
        let g = CellField::new(d, gs.clone()).unwrap();
        let neg = g.map(|v| -v).unwrap();
        let e1 = energy_eps(&u, &g, &p, eps, QuadratureSpec::default()).unwrap().total;
        let e2 = energy_eps(&u, &neg, &p, eps, QuadratureSpec::default()).unwrap().total;
        prop_assert!((e1 - e2).abs() <= 1e-12 * e1.max(1.0));
    }
}
