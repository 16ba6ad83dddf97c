mod common;

use common::{c, random_field, rel_err};
use mkdv_core::hierarchy::*;
use mkdv_core::spectral::{product_integral, Factor};
use mkdv_core::{Complex64, SpectralField};
use std::f64::consts::PI;

fn wave() -> SpectralField {
    SpectralField::plane_wave(1, 1, c(1.0, 0.0)).unwrap()
}

#[test]
fn recursion_on_plane_wave() {
    let seq = w_sequence(&wave(), 5).unwrap();
    let e = wave();
    for (j, factor) in [(1, 1.0), (2, 1.0), (3, 2.0), (4, 4.0), (5, 9.0)] {
        let w = seq.w(j);
        assert!(w.cutoff() >= j);
        for k in -(w.cutoff() as i64)..=w.cutoff() as i64 {
            let want = e.coeff(k) * factor;
            assert!((w.coeff(k) - want).norm() < 1e-12, "w{j} mode {k}");
        }
    }
    let energies = energies(&wave(), 5).unwrap();
    for (got, want) in energies.iter().zip([2.0, 2.0, 4.0, 8.0, 18.0]) {
        assert!((got - want * PI).abs() < 1e-12);
    }
}

#[test]
fn first_level_is_the_field() {
    let u = random_field(4, 5, 1.0, 1.0);
    assert_eq!(w_sequence(&u, 1).unwrap().w(1), &u);
}

#[test]
fn closed_forms_and_signs() {
    assert!((energy_explicit(&wave(), 2).unwrap() - 2.0 * PI).abs() < 1e-13);
    let constant = SpectralField::constant(3, c(0.7, -0.2));
    assert!(energy_explicit(&constant, 4).unwrap().abs() < 1e-14);
    for seed in 0..20 {
        let u = random_field(seed, 6, 1.0, 0.7);
        for n in 1..=5 {
            let rec = energy(&u, n).unwrap();
            let closed = closed_form_sign(n) * energy_explicit(&u, n).unwrap();
            assert!(rel_err(rec, closed) < 1e-10, "seed {seed} n {n}");
        }
    }
}

#[test]
fn remainder_cases() {
    assert!((remainder(&wave(), 2).unwrap() - 16.0 * PI).abs() < 1e-12);
    assert_eq!(remainder(&SpectralField::zeros(3), 2).unwrap(), 0.0);
    let u = random_field(7, 4, 1.0, 0.8);
    let du = u.derivative(1);
    let a = product_integral(&[Factor::plain(&du), Factor::conj(&du), Factor::plain(&u), Factor::conj(&u)]).unwrap().re;
    let m = SpectralField::from_fn(8, |k| {
        let mut s = Complex64::new(0.0, 0.0);
        for (j, x) in u.modes() {
            s += x * u.coeff(j - k).conj();
        }
        s
    });
    let dm = m.derivative(1);
    let b = product_integral(&[Factor::plain(&dm), Factor::conj(&dm)]).unwrap().re;
    let six = product_integral(&[Factor::plain(&u), Factor::plain(&u), Factor::plain(&u), Factor::conj(&u), Factor::conj(&u), Factor::conj(&u)])
        .unwrap()
        .re;
    let want = 6.0 * a + b + 2.0 * six;
    assert!(rel_err(remainder(&u, 2).unwrap(), want) < 1e-10);
}

#[test]
fn leading_parts_cases() {
    let lp = leading_parts(&wave(), 2).unwrap();
    assert!((lp.quadratic - 2.0 * PI).abs() < 1e-12);
    assert!((lp.quartic_leading - 12.0 * PI).abs() < 1e-12);
    assert!((lp.residual - 4.0 * PI).abs() < 1e-12);
    let z = leading_parts(&SpectralField::zeros(2), 2).unwrap();
    assert_eq!((z.quadratic, z.quartic_leading, z.residual), (0.0, 0.0, 0.0));
    for seed in 0..10 {
        let u = random_field(30 + seed, 5, 1.0, 0.8);
        let six = product_integral(&[Factor::plain(&u), Factor::plain(&u), Factor::plain(&u), Factor::conj(&u), Factor::conj(&u), Factor::conj(&u)])
            .unwrap()
            .re;
        assert!(rel_err(leading_parts(&u, 2).unwrap().residual, 2.0 * six) < 1e-10);
    }
}

#[test]
fn homogeneous_components() {
    assert!((homogeneous_component(&wave(), 1, 2).unwrap() - 2.0 * PI).abs() < 1e-8);
    for seed in 0..5 {
        let u = random_field(40 + seed, 4, 1.0, 0.8);
        for (n, d) in [(3usize, 1u32), (5, 2)] {
            let q = homogeneous_component(&u, n, 2).unwrap();
            assert!(rel_err(q, u.derivative_norm_sq(d)) < 1e-8, "n {n}");
        }
        let du = u.derivative(1);
        let quartic = leading_parts(&u, 2).unwrap().quartic_leading;
        let got = homogeneous_component(&u, 5, 4).unwrap();
        assert!(rel_err(got, quartic) < 1e-8);
        let odd = homogeneous_component(&u, 5, 3).unwrap();
        assert!(odd.abs() < 1e-8 * (1.0 + u.l2_norm().powi(6)));
        assert!(du.l2_norm() > 0.0);
    }
}

#[test]
fn symmetry_invariances() {
    for seed in 0..10 {
        let u = random_field(50 + seed, 5, 1.0, 0.8);
        let rotated = u.scale(Complex64::from_polar(1.0, 0.3 + seed as f64));
        let shifted = u.translate(0.7 * seed as f64);
        for n in 1..=5 {
            let e = energy(&u, n).unwrap();
            assert!(rel_err(energy(&rotated, n).unwrap(), e) < 1e-10);
            assert!(rel_err(energy(&shifted, n).unwrap(), e) < 1e-10);
        }
    }
}

#[test]
fn level_errors() {
    assert!(energy(&wave(), 0).is_err());
    assert!(energy_explicit(&wave(), 6).is_err());
    let r = EnergyReport::from_field(&wave(), 5).unwrap();
    assert_eq!(EnergyReport::csv_header(5).split(',').count(), r.csv_row().split(',').count());
}
