mod common;

use common::c;
use mkdv_core::hierarchy::energy;
use mkdv_core::measures::*;
use mkdv_core::SpectralField;
use std::f64::consts::PI;

#[test]
fn sampler_is_deterministic() {
    let spec = GaussianSamplerSpec::new(2, 16, 42, "sampler");
    assert_eq!(sample_mu(&spec), sample_mu(&spec));
    assert_ne!(sample_mu(&spec), sample_mu(&spec.for_sample(1)));
    assert_ne!(sample_mu(&spec), sample_mu(&GaussianSamplerSpec::new(2, 16, 43, "sampler")));
}

#[test]
fn gaussian_moments() {
    let spec = GaussianSamplerSpec::new(2, 0, 3, "moments");
    let mut rng = spec.rng();
    let draws: Vec<_> = (0..100_000).map(|_| complex_gaussian(&mut rng)).collect();
    let abs2: Vec<f64> = draws.iter().map(|g| g.norm_sqr()).collect();
    let sq_re: Vec<f64> = draws.iter().map(|g| (g * g).re).collect();
    let sq_im: Vec<f64> = draws.iter().map(|g| (g * g).im).collect();
    assert!(McEstimate::from_values(&abs2, 3).z_score(1.0).abs() < 3.0);
    assert!(McEstimate::from_values(&sq_re, 3).z_score(0.0).abs() < 3.0);
    assert!(McEstimate::from_values(&sq_im, 3).z_score(0.0).abs() < 3.0);
}

#[test]
fn field_moments() {
    let spec = GaussianSamplerSpec::new(2, 32, 5, "field");
    let est = mc_expectation(|u| u.sobolev_norm_sq(1.4), &spec, 10_000).unwrap();
    let want: f64 = (-32i64..=32).map(|j| (1.0 + (j * j) as f64).powf(1.4) / (1.0 + (j as f64).powi(4))).sum();
    assert!(est.z_score(want).abs() < 3.0);
    assert!((expected_sobolev_sq(2, 32, 1.4) - want).abs() < 1e-12 * want);
    let mean_mode = mc_expectation(|u| u.coeff(3).re, &spec, 10_000).unwrap();
    assert!(mean_mode.z_score(0.0).abs() < 3.0);
    let e2 = mc_expectation(|u| energy(u, 2).unwrap(), &spec.with_stream("e2"), 10_000).unwrap();
    assert!(e2.z_score(0.0).abs() < 3.0);
}

#[test]
fn degenerate_band_gives_constants() {
    let u = sample_mu(&GaussianSamplerSpec::new(2, 0, 1, "k0"));
    assert_eq!(u.cutoff(), 0);
    assert_eq!(u.derivative(1).max_abs_coeff(), 0.0);
}

#[test]
fn constant_functional() {
    let est = mc_expectation(|_| 2.5, &GaussianSamplerSpec::new(2, 4, 1, "c"), 100).unwrap();
    assert_eq!((est.mean, est.stderr), (2.5, 0.0));
}

#[test]
fn cutoff_examples() {
    let cs = CutoffSpec { r: 2.0 };
    assert_eq!(chi_r(0.0, &cs, false), 1.0);
    assert_eq!(chi_r(0.0, &cs, true), 0.0);
    assert_eq!(chi_r(4.0, &cs, false), 0.0);
    assert!((chi_r(3.0, &cs, false) - 0.716_531_310_573_789_3).abs() < 1e-12);
}

#[test]
fn density_cases() {
    assert_eq!(weighted_density(&SpectralField::zeros(8), 2, 5.0, 4).unwrap(), 1.0);
    let big = SpectralField::plane_wave(8, 1, c(3.0, 0.0)).unwrap();
    assert_eq!(weighted_density(&big, 2, 5.0, 4).unwrap(), 0.0);
    let eps: f64 = 0.1;
    let small = SpectralField::plane_wave(8, 1, c(eps, 0.0)).unwrap();
    let want = (-(6.0 * 2.0 * PI * eps.powi(4) + 2.0 * 2.0 * PI * eps.powi(6))).exp();
    assert!((weighted_density(&small, 2, 10.0, 4).unwrap() - want).abs() < 1e-13);
    let u = sample_mu(&GaussianSamplerSpec::new(2, 8, 9, "full"));
    assert_eq!(weighted_density(&u, 2, 5.0, 8).unwrap(), weighted_density(&u, 2, 5.0, 20).unwrap());
}

#[test]
fn density_stays_below_its_bound() {
    let bound = density_log_bound(2, 5.0).unwrap().exp();
    let spec = GaussianSamplerSpec::new(2, 16, 10, "bound");
    let vals = sample_values(|u| weighted_density(u, 2, 5.0, 5).unwrap(), &spec, 100_000);
    assert!(vals.iter().all(|v| *v >= 0.0 && *v <= bound));
}

#[test]
fn tail_edges() {
    let spec = GaussianSamplerSpec::new(2, 16, 11, "tail");
    let rep = tail_probability(&spec, 1.4, &[0.0, 1e6], 2000).unwrap();
    assert_eq!(rep.estimates[0].mean, 1.0);
    assert_eq!(rep.estimates[1].mean, 0.0);
    assert!(tail_probability(&spec, 1.6, &[1.0], 100).is_err());
}

#[test]
fn invariance_trivial_rows() {
    let spec = GaussianSamplerSpec::new(2, 25, 12, "inv");
    let base = InvarianceSetup {
        radius: 2.0,
        s: 1.4,
        t: 0.0,
        n: 2,
        r: 5.0,
        ladder: vec![4, 8],
        dt: None,
    };
    for setup in [base.clone(), InvarianceSetup { t: 0.5, radius: f64::INFINITY, ..base.clone() }] {
        for row in almost_invariance(&setup, &spec, 50).unwrap() {
            assert_eq!((row.defect.mean, row.defect.stderr), (0.0, 0.0));
        }
    }
    assert!(almost_invariance(&InvarianceSetup { ladder: vec![9], ..base }, &spec, 50).is_err());
}
