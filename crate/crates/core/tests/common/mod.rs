#![allow(dead_code)]

use mkdv_core::measures::{complex_gaussian, GaussianSamplerSpec};
use mkdv_core::{Complex64, SpectralField};

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Random field with coefficients `amp · g_k / (1 + |k|)^decay`.
pub fn random_field(seed: u64, k: usize, decay: f64, amp: f64) -> SpectralField {
    let mut rng = GaussianSamplerSpec::new(0, k, seed, "test-field").rng();
    SpectralField::from_fn(k, |j| complex_gaussian(&mut rng) * (amp / (1.0 + j.abs() as f64).powf(decay)))
}

/// Field scaled to a given L² norm.
pub fn random_field_with_norm(seed: u64, k: usize, decay: f64, norm: f64) -> SpectralField {
    let u = random_field(seed, k, decay, 1.0);
    let scale = norm / u.l2_norm();
    u.scale_real(scale)
}

pub fn rel_err(got: f64, want: f64) -> f64 {
    (got - want).abs() / want.abs().max(f64::MIN_POSITIVE)
}
