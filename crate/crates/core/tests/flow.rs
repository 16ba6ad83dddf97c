mod common;

use common::{c, random_field};
use mkdv_core::flow::*;
use mkdv_core::hierarchy::energy;
use mkdv_core::{Complex64, SpectralField};
use std::f64::consts::PI;

#[test]
fn vector_field_cases() {
    let high = SpectralField::plane_wave(9, 7, c(0.5, 0.5)).unwrap();
    let f = vector_field(&high, 3).unwrap();
    assert!((f.coeff(7) - c(0.0, 343.0) * c(0.5, 0.5)).norm() < 1e-12);
    assert_eq!(vector_field(&SpectralField::zeros(4), 2).unwrap().max_abs_coeff(), 0.0);
}

#[test]
fn linear_modes_and_identity() {
    let p = FlowParams::new(3, 10, 1e-2).unwrap();
    let high = SpectralField::plane_wave(10, 6, c(1.0, 0.0)).unwrap();
    let u = evolve(&high, 0.37, &p).unwrap();
    let want = Complex64::from_polar(1.0, 216.0 * 0.37);
    assert!((u.coeff(6) - want).norm() < 1e-13);
    let r = random_field(1, 10, 1.0, 0.5);
    assert_eq!(evolve(&r, 0.0, &p).unwrap(), r);
    let w = linear_propagator(&SpectralField::plane_wave(1, 1, c(1.0, 0.0)).unwrap(), PI);
    assert!((w.coeff(1) + c(1.0, 0.0)).norm() < 1e-15);
}

#[test]
fn group_property() {
    let u = random_field(2, 25, 1.5, 0.5);
    let p = FlowParams::new(8, 25, 1e-3).unwrap();
    let a = evolve(&evolve(&u, 0.2, &p).unwrap(), 0.3, &p).unwrap();
    let b = evolve(&u, 0.5, &p).unwrap();
    assert!((&a - &b).l2_norm() < 1e-8);
}

#[test]
fn norm_conservation_and_high_isometry() {
    let u = random_field(3, 25, 1.2, 0.5);
    let p = FlowParams::new(8, 25, 5e-4).unwrap();
    let v = evolve(&u, 1.0, &p).unwrap();
    assert!((v.l2_norm() - u.l2_norm()).abs() < 1e-9 * u.l2_norm());
    for s in [0.0, 1.0, 2.5] {
        let (a, b) = (v.project_high(8).sobolev_norm(s), u.project_high(8).sobolev_norm(s));
        assert!((a - b).abs() < 1e-13 * b);
    }
}

#[test]
fn plane_wave_conservation_and_refinement() {
    let u = SpectralField::plane_wave(7, 2, c(0.4, 0.3)).unwrap();
    let p = FlowParams::new(2, 7, 1e-3).unwrap();
    let rep = conservation_report(&trajectory(&u, 1.0, 10, &p, &[1.0]).unwrap());
    assert!(rep.e1_max_rel_drift < 1e-10 && rep.e3_max_drift < 1e-10 && rep.e5_max_drift < 1e-10);
    let a = SpectralField::plane_wave(7, 1, c(0.9, 0.1)).unwrap();
    let exact = |t: f64| a.coeff(1) * Complex64::from_polar(1.0, (1.0 + 6.0 * a.coeff(1).norm_sqr()) * t);
    let e1 = (evolve(&a, 1.0, &FlowParams::new(2, 7, 2e-3).unwrap()).unwrap().coeff(1) - exact(1.0)).norm();
    let e2 = (evolve(&a, 1.0, &FlowParams::new(2, 7, 1e-3).unwrap()).unwrap().coeff(1) - exact(1.0)).norm();
    assert!((e1 / e2 - 16.0).abs() < 3.2, "ratio {}", e1 / e2);
}

#[test]
fn trajectory_shapes() {
    let u = random_field(4, 10, 1.0, 0.5);
    let p = FlowParams::new(3, 10, 1e-3).unwrap();
    let t0 = trajectory(&u, 0.0, 5, &p, &[1.0]).unwrap();
    assert_eq!(t0.len(), 1);
    assert_eq!(t0.snapshots[0], u);
    let t = trajectory(&u, 0.5, 5, &p, &[0.0, 1.5]).unwrap();
    assert_eq!(t.len(), 6);
    assert_eq!(t.csv_header(), "t,E1,E3,E5,Hs_0,Hs_1.5");
    assert_eq!(t.csv_rows().len(), 6);
}

#[test]
fn linear_data_has_no_low_energy() {
    let u = SpectralField::plane_wave(12, 9, c(1.0, 0.0)).unwrap();
    let p = FlowParams::new(3, 12, 1e-2).unwrap();
    let t = trajectory(&u, 1.0, 4, &p, &[0.0]).unwrap();
    assert!(t.e1.iter().chain(&t.e3).chain(&t.e5).all(|e| *e == 0.0));
    assert!(t.sobolev[0].1.iter().all(|x| (x - t.sobolev[0].1[0]).abs() < 1e-13));
}

#[test]
fn e_star_band_limited_and_zero() {
    let u = SpectralField::from_fn(2, |k| c(0.5, 0.1 * k as f64));
    for j in [3, 5] {
        for m in [EStarMethod::Analytic, EStarMethod::FiniteDifference] {
            // The difference quotient is limited by roundoff, about eps · E_j / h.
            let tol = if m == EStarMethod::Analytic { 1e-12 } else { 1e-15 * energy(&u, j).unwrap().abs() / default_fd_step(&u) * 20.0 };
            assert!(e_star(&u, j, 6, m).unwrap().abs() < tol);
            assert_eq!(e_star(&SpectralField::zeros(25), j, 8, m).unwrap(), 0.0);
        }
    }
}

#[test]
fn e_star_matches_derivative_of_energy() {
    for seed in 0..3 {
        let u = random_field(10 + seed, 25, 1.2, 0.6);
        for j in [3, 5] {
            let analytic = e_star_analytic(&u, j, 8).unwrap();
            let fd = e_star(&u, j, 8, EStarMethod::FiniteDifference).unwrap();
            assert!((analytic - fd).abs() <= 1e-6 * (1.0 + analytic.abs()), "j {j}: {analytic} vs {fd}");
            let cmp = compare_e_star(&u, j, 8, default_fd_step(&u)).unwrap();
            assert!((cmp.ratio - 1.0).abs() < 1e-5);
        }
    }
}

#[test]
fn plain_central_difference_is_second_order() {
    let u = random_field(20, 25, 1.2, 0.6);
    let analytic = e_star_analytic(&u, 3, 8).unwrap();
    // Asymptotic only once h · N³ is small.
    let h = 2e-4;
    let a = (central_difference(&u, 3, 8, h).unwrap() - analytic).abs();
    let b = (central_difference(&u, 3, 8, h / 2.0).unwrap() - analytic).abs();
    assert!((a / b - 4.0).abs() < 0.8, "ratio {}", a / b);
}

#[test]
fn energy_change_follows_integrated_e_star() {
    let u = random_field(21, 25, 1.2, 0.6);
    let p = FlowParams::new(8, 25, 1e-3).unwrap();
    let traj = trajectory(&u, 0.2, 200, &p, &[]).unwrap();
    let change = traj.e3.last().unwrap() - traj.e3[0];
    let integral = integrated_e_star(&traj, 3).unwrap();
    assert!((change - integral).abs() < 1e-4 * (1.0 + change.abs()), "{change} vs {integral}");
    let _ = energy(&u, 3).unwrap();
}

#[test]
fn w1inf_integral_cases() {
    let wave = SpectralField::plane_wave(3, 1, c(1.0, 0.0)).unwrap();
    let p = FlowParams::new(3, 3, 1e-3).unwrap();
    let traj = trajectory(&wave, 1.0, 10, &p, &[]).unwrap();
    assert!((w1inf_time_integral(&traj, 3).unwrap() - 2.0).abs() < 1e-6);
    let zero = trajectory(&SpectralField::zeros(3), 1.0, 4, &p, &[]).unwrap();
    assert_eq!(w1inf_time_integral(&zero, 3).unwrap(), 0.0);
    let u = random_field(22, 12, 1.5, 0.5);
    let q = FlowParams::new(4, 12, 1e-3).unwrap();
    let a = w1inf_time_integral(&trajectory(&u, 0.5, 20, &q, &[]).unwrap(), 4).unwrap();
    let b = w1inf_time_integral(&trajectory(&u, 0.5, 40, &q, &[]).unwrap(), 4).unwrap();
    assert!((a - b).abs() < 0.01 * b);
}

#[test]
fn divergence_cases() {
    assert!(divergence_check(&SpectralField::zeros(13), 4, 1e-4) < 1e-18);
    for seed in 0..5 {
        let u = random_field(30 + seed, 13, 1.0, 0.7);
        let tol = 1e-5 * (1.0 + u.project_low(4).l2_norm().powi(3));
        assert!(divergence_check(&u, 4, 1e-4) < tol);
        assert!(divergence_check(&u, 4, 5e-5) < tol);
    }
}

#[test]
fn cauchy_gap_cases() {
    let wave = SpectralField::plane_wave(40, 2, c(0.5, 0.0)).unwrap();
    let p = FlowParams::new(4, 40, 1e-3).unwrap();
    assert!(cauchy_gap(&wave, 4, 8, 1.0, 5, &p).unwrap() < 1e-8);
    let u = random_field(40, 40, 1.5, 0.5);
    assert_eq!(cauchy_gap(&u, 4, 8, 0.0, 5, &p).unwrap(), 0.0);
    assert_eq!(cauchy_gap(&u, 8, 8, 1.0, 5, &p).unwrap(), 0.0);
    assert!(cauchy_gap(&u, 9, 8, 1.0, 5, &p).is_err());
}

#[test]
fn parameter_validation() {
    assert!(FlowParams::new(4, 3, 1e-3).is_err());
    assert!(FlowParams::new(4, 13, 0.0).is_err());
    assert!(FlowParams::new(4, 13, -1.0).is_err());
    assert!(FlowParams::new(4, 13, 1e-3).unwrap().alias_safe());
    assert!(!FlowParams::new(4, 12, 1e-3).unwrap().alias_safe());
}
