//! Band-limited complex fields on the torus [0, 2π).
//!
//! A field is stored through its Fourier coefficients on the modes
//! `-K..=K`, with `u(x) = Σ û_k e^{ikx}`. No reality constraint is imposed,
//! so `û_{-k}` and `conj(û_k)` are unrelated.
//!
//! Products are evaluated on grids sized from the total trigonometric degree
//! of the factors, which makes every returned coefficient exact up to
//! rounding instead of merely alias-damped.

use std::f64::consts::PI;
use std::io::{self, Write};
use std::ops::{Add, Mul, Neg, Sub};
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::numeric::NeumaierSum;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SpectralError {
    #[error("coefficient array has length {got}, expected {expected}")]
    BadLength { got: usize, expected: usize },
    #[error("mode {k} lies outside the band |k| <= {cutoff}")]
    ModeOutOfBand { k: i64, cutoff: usize },
    #[error("a product needs at least one factor")]
    EmptyProduct,
    #[error("a grid of {points} points cannot resolve cutoff {cutoff} (need {needed})")]
    GridTooSmall {
        points: usize,
        cutoff: usize,
        needed: usize,
    },
    #[error("non-finite coefficient at mode {k}")]
    NonFinite { k: i64 },
}

/// Fourier coefficients of a complex function on the torus.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralField {
    cutoff: usize,
    coeffs: Vec<Complex64>,
}

impl SpectralField {
    pub fn zeros(cutoff: usize) -> Self {
        SpectralField {
            cutoff,
            coeffs: vec![Complex64::new(0.0, 0.0); 2 * cutoff + 1],
        }
    }

    /// Builds a field from coefficients ordered `k = -K..=K`.
    pub fn from_coeffs(cutoff: usize, coeffs: Vec<Complex64>) -> Result<Self, SpectralError> {
        if coeffs.len() != 2 * cutoff + 1 {
            return Err(SpectralError::BadLength {
                got: coeffs.len(),
                expected: 2 * cutoff + 1,
            });
        }
        Ok(SpectralField { cutoff, coeffs })
    }

    pub fn from_fn(cutoff: usize, mut f: impl FnMut(i64) -> Complex64) -> Self {
        let k = cutoff as i64;
        SpectralField {
            cutoff,
            coeffs: (-k..=k).map(&mut f).collect(),
        }
    }

    /// `amplitude · e^{ikx}` inside a band of the given cutoff.
    pub fn plane_wave(cutoff: usize, k: i64, amplitude: Complex64) -> Result<Self, SpectralError> {
        let mut u = Self::zeros(cutoff);
        u.set_coeff(k, amplitude)?;
        Ok(u)
    }

    pub fn constant(cutoff: usize, c: Complex64) -> Self {
        let mut u = Self::zeros(cutoff);
        u.coeffs[cutoff] = c;
        u
    }

    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [Complex64] {
        &mut self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<Complex64> {
        self.coeffs
    }

    /// Iterates over `(k, û_k)` for every stored mode.
    pub fn modes(&self) -> impl Iterator<Item = (i64, Complex64)> + '_ {
        let k0 = -(self.cutoff as i64);
        self.coeffs
            .iter()
            .enumerate()
            .map(move |(i, c)| (k0 + i as i64, *c))
    }

    /// Coefficient of mode `k`; zero outside the stored band.
    pub fn coeff(&self, k: i64) -> Complex64 {
        if k.unsigned_abs() as usize > self.cutoff {
            Complex64::new(0.0, 0.0)
        } else {
            self.coeffs[(k + self.cutoff as i64) as usize]
        }
    }

    pub fn set_coeff(&mut self, k: i64, value: Complex64) -> Result<(), SpectralError> {
        if k.unsigned_abs() as usize > self.cutoff {
            return Err(SpectralError::ModeOutOfBand {
                k,
                cutoff: self.cutoff,
            });
        }
        let i = (k + self.cutoff as i64) as usize;
        self.coeffs[i] = value;
        Ok(())
    }

    /// Same function stored with a different cutoff. Modes beyond the new
    /// cutoff are dropped.
    pub fn with_cutoff(&self, cutoff: usize) -> Self {
        Self::from_fn(cutoff, |k| self.coeff(k))
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|c| c.re.is_finite() && c.im.is_finite())
    }

    pub fn check_finite(&self) -> Result<(), SpectralError> {
        match self.modes().find(|(_, c)| !(c.re.is_finite() && c.im.is_finite())) {
            Some((k, _)) => Err(SpectralError::NonFinite { k }),
            None => Ok(()),
        }
    }

    /// Multiplies every coefficient by `f(k)`.
    pub fn map_modes(&self, mut f: impl FnMut(i64, Complex64) -> Complex64) -> Self {
        let coeffs = self.modes().map(|(k, c)| f(k, c)).collect();
        SpectralField {
            cutoff: self.cutoff,
            coeffs,
        }
    }

    /// Coefficients of `conj(u(x))`, that is `conj(û_{-k})` at mode `k`.
    pub fn conj(&self) -> Self {
        let coeffs = self.coeffs.iter().rev().map(|c| c.conj()).collect();
        SpectralField {
            cutoff: self.cutoff,
            coeffs,
        }
    }

    pub fn scale(&self, z: Complex64) -> Self {
        self.map_modes(|_, c| c * z)
    }

    pub fn scale_real(&self, a: f64) -> Self {
        self.map_modes(|_, c| c * a)
    }

    /// `u(· + h)`.
    pub fn translate(&self, h: f64) -> Self {
        self.map_modes(|k, c| c * Complex64::from_polar(1.0, k as f64 * h))
    }

    /// Dirichlet projector onto `|k| <= n`.
    pub fn project_low(&self, n: usize) -> Self {
        self.map_modes(|k, c| {
            if k.unsigned_abs() as usize <= n {
                c
            } else {
                Complex64::new(0.0, 0.0)
            }
        })
    }

    /// Complement of [`project_low`](Self::project_low).
    pub fn project_high(&self, n: usize) -> Self {
        self.map_modes(|k, c| {
            if k.unsigned_abs() as usize > n {
                c
            } else {
                Complex64::new(0.0, 0.0)
            }
        })
    }

    /// `∂^order u`: mode `k` is multiplied by `(ik)^order`.
    pub fn derivative(&self, order: u32) -> Self {
        if order == 0 {
            return self.clone();
        }
        self.map_modes(|k, c| c * Complex64::new(0.0, k as f64).powu(order))
    }

    /// `J^s u`: mode `k` is multiplied by `(1+k²)^{s/2}`.
    pub fn bessel_multiplier(&self, s: f64) -> Self {
        self.map_modes(|k, c| c * bessel_weight(k, s))
    }

    pub fn sobolev_norm_sq(&self, s: f64) -> f64 {
        let mut acc = NeumaierSum::default();
        for (k, c) in self.modes() {
            acc.add(japanese_sq(k).powf(s) * c.norm_sqr());
        }
        2.0 * PI * acc.value()
    }

    /// `(2π Σ (1+k²)^s |û_k|²)^{1/2}`.
    pub fn sobolev_norm(&self, s: f64) -> f64 {
        self.sobolev_norm_sq(s).sqrt()
    }

    pub fn l2_norm_sq(&self) -> f64 {
        self.sobolev_norm_sq(0.0)
    }

    pub fn l2_norm(&self) -> f64 {
        self.l2_norm_sq().sqrt()
    }

    /// `‖∂^n u‖²_{L²} = 2π Σ k^{2n} |û_k|²`.
    pub fn derivative_norm_sq(&self, n: u32) -> f64 {
        let mut acc = NeumaierSum::default();
        for (k, c) in self.modes() {
            acc.add((k as f64).powi(2 * n as i32) * c.norm_sqr());
        }
        2.0 * PI * acc.value()
    }

    /// `∫ u dx = 2π û_0`.
    pub fn integrate(&self) -> Complex64 {
        self.coeffs[self.cutoff] * (2.0 * PI)
    }

    /// `∫ u·v dx` from coefficients alone.
    pub fn integral_with(&self, other: &SpectralField) -> Complex64 {
        let k = self.cutoff.min(other.cutoff) as i64;
        let mut re = NeumaierSum::default();
        let mut im = NeumaierSum::default();
        for m in -k..=k {
            let z = self.coeff(m) * other.coeff(-m);
            re.add(z.re);
            im.add(z.im);
        }
        Complex64::new(re.value(), im.value()) * (2.0 * PI)
    }

    /// `∫ conj(u)·v dx`.
    pub fn inner(&self, other: &SpectralField) -> Complex64 {
        let k = self.cutoff.min(other.cutoff) as i64;
        let mut re = NeumaierSum::default();
        let mut im = NeumaierSum::default();
        for m in -k..=k {
            let z = self.coeff(m).conj() * other.coeff(m);
            re.add(z.re);
            im.add(z.im);
        }
        Complex64::new(re.value(), im.value()) * (2.0 * PI)
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    /// Values on the uniform grid `x_m = 2πm/M`. Requires `M >= 2K+1` so the
    /// grid determines the field.
    pub fn to_grid(&self, points: usize) -> Result<GridEvaluation, SpectralError> {
        let needed = 2 * self.cutoff + 1;
        if points < needed {
            return Err(SpectralError::GridTooSmall {
                points,
                cutoff: self.cutoff,
                needed,
            });
        }
        let mut tr = Transforms::new();
        let mut values = Vec::new();
        tr.synthesize(self, points, false, &mut values);
        Ok(GridEvaluation { values })
    }

    /// Sup of `|u|` plus sup of `|∂u|`, sampled on a grid oversampled 8×
    /// relative to the band. The result can only undershoot the true norm.
    pub fn w1inf_norm(&self) -> f64 {
        let points = 8 * (2 * self.cutoff + 1);
        let mut tr = Transforms::new();
        let mut values = Vec::new();
        tr.synthesize(self, points, false, &mut values);
        let sup_u = values.iter().map(|z| z.norm()).fold(0.0, f64::max);
        tr.synthesize(&self.derivative(1), points, false, &mut values);
        let sup_du = values.iter().map(|z| z.norm()).fold(0.0, f64::max);
        sup_u + sup_du
    }

    /// Sup of `|u|` on the same oversampled grid as `w1inf_norm`.
    pub fn sup_norm(&self) -> f64 {
        let points = 8 * (2 * self.cutoff + 1);
        let mut tr = Transforms::new();
        let mut values = Vec::new();
        tr.synthesize(self, points, false, &mut values);
        values.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("field serialization cannot fail")
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }

    fn binary_op(&self, other: &SpectralField, op: impl Fn(Complex64, Complex64) -> Complex64) -> Self {
        let cutoff = self.cutoff.max(other.cutoff);
        Self::from_fn(cutoff, |k| op(self.coeff(k), other.coeff(k)))
    }
}

/// `1 + k²`.
pub fn japanese_sq(k: i64) -> f64 {
    1.0 + (k as f64) * (k as f64)
}

/// `(1+k²)^{s/2}`.
pub fn bessel_weight(k: i64, s: f64) -> f64 {
    japanese_sq(k).powf(0.5 * s)
}

impl Add for &SpectralField {
    type Output = SpectralField;
    fn add(self, rhs: &SpectralField) -> SpectralField {
        self.binary_op(rhs, |a, b| a + b)
    }
}

impl Sub for &SpectralField {
    type Output = SpectralField;
    fn sub(self, rhs: &SpectralField) -> SpectralField {
        self.binary_op(rhs, |a, b| a - b)
    }
}

impl Neg for &SpectralField {
    type Output = SpectralField;
    fn neg(self) -> SpectralField {
        self.map_modes(|_, c| -c)
    }
}

impl Mul<Complex64> for &SpectralField {
    type Output = SpectralField;
    fn mul(self, rhs: Complex64) -> SpectralField {
        self.scale(rhs)
    }
}

impl Mul<f64> for &SpectralField {
    type Output = SpectralField;
    fn mul(self, rhs: f64) -> SpectralField {
        self.scale_real(rhs)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FieldRepr {
    #[serde(rename = "K")]
    cutoff: usize,
    coeffs: Vec<[f64; 2]>,
}

impl Serialize for SpectralField {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        FieldRepr {
            cutoff: self.cutoff,
            coeffs: self.coeffs.iter().map(|c| [c.re, c.im]).collect(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for SpectralField {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let repr = FieldRepr::deserialize(deserializer)?;
        let coeffs = repr
            .coeffs
            .into_iter()
            .map(|[re, im]| Complex64::new(re, im))
            .collect();
        SpectralField::from_coeffs(repr.cutoff, coeffs).map_err(serde::de::Error::custom)
    }
}

/// Samples of a field on `x_m = 2πm/M`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridEvaluation {
    values: Vec<Complex64>,
}

impl GridEvaluation {
    pub fn from_values(values: Vec<Complex64>) -> Self {
        GridEvaluation { values }
    }

    pub fn num_points(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn point(&self, m: usize) -> f64 {
        2.0 * PI * m as f64 / self.values.len() as f64
    }

    /// Discrete Fourier analysis back to modes `|k| <= cutoff`.
    pub fn to_field(&self, cutoff: usize) -> Result<SpectralField, SpectralError> {
        let needed = 2 * cutoff + 1;
        if self.values.len() < needed {
            return Err(SpectralError::GridTooSmall {
                points: self.values.len(),
                cutoff,
                needed,
            });
        }
        let mut buf = self.values.clone();
        Ok(Transforms::new().analyze(&mut buf, cutoff))
    }

    /// CSV with columns `x, re_u, im_u`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "x,re_u,im_u")?;
        for (m, z) in self.values.iter().enumerate() {
            writeln!(w, "{},{},{}", self.point(m), z.re, z.im)?;
        }
        Ok(())
    }
}

/// One factor of a pointwise product, optionally conjugated.
#[derive(Debug, Clone, Copy)]
pub struct Factor<'a> {
    pub field: &'a SpectralField,
    pub conjugate: bool,
}

impl<'a> Factor<'a> {
    pub fn plain(field: &'a SpectralField) -> Self {
        Factor {
            field,
            conjugate: false,
        }
    }

    pub fn conj(field: &'a SpectralField) -> Self {
        Factor {
            field,
            conjugate: true,
        }
    }
}

impl<'a> From<&'a SpectralField> for Factor<'a> {
    fn from(field: &'a SpectralField) -> Self {
        Factor::plain(field)
    }
}

/// Smallest integer `>= n` whose prime factors are 2, 3 and 5.
pub fn smooth_size(n: usize) -> usize {
    let mut m = n.max(1);
    loop {
        let mut r = m;
        for p in [2, 3, 5] {
            while r % p == 0 {
                r /= p;
            }
        }
        if r == 1 {
            return m;
        }
        m += 1;
    }
}

/// FFT plans reused across transforms. Holding one of these across a loop
/// avoids re-planning; the free functions build a fresh one per call.
pub struct Transforms {
    planner: FftPlanner<f64>,
    scratch: Vec<Complex64>,
}

impl Default for Transforms {
    fn default() -> Self {
        Self::new()
    }
}

impl Transforms {
    pub fn new() -> Self {
        Transforms {
            planner: FftPlanner::new(),
            scratch: Vec::new(),
        }
    }

    fn inverse_plan(&mut self, m: usize) -> Arc<dyn Fft<f64>> {
        self.planner.plan_fft_inverse(m)
    }

    fn forward_plan(&mut self, m: usize) -> Arc<dyn Fft<f64>> {
        self.planner.plan_fft_forward(m)
    }

    fn run(&mut self, plan: Arc<dyn Fft<f64>>, buf: &mut [Complex64]) {
        let need = plan.get_inplace_scratch_len();
        if self.scratch.len() < need {
            self.scratch.resize(need, Complex64::new(0.0, 0.0));
        }
        plan.process_with_scratch(buf, &mut self.scratch[..need]);
    }

    /// Unnormalized inverse transform: `x_m = Σ_j X_j e^{2πijm/M}`.
    pub fn inverse_in_place(&mut self, buf: &mut [Complex64]) {
        let plan = self.inverse_plan(buf.len());
        self.run(plan, buf);
    }

    /// Unnormalized forward transform: `X_j = Σ_m x_m e^{-2πijm/M}`.
    pub fn forward_in_place(&mut self, buf: &mut [Complex64]) {
        let plan = self.forward_plan(buf.len());
        self.run(plan, buf);
    }

    /// Writes the values of `u` (or `conj(u)`) on an `M`-point grid into
    /// `out`. Modes that alias onto each other are summed, which is harmless
    /// whenever the caller sized `M` from the degree of the final product.
    pub fn synthesize(&mut self, u: &SpectralField, m: usize, conjugate: bool, out: &mut Vec<Complex64>) {
        out.clear();
        out.resize(m, Complex64::new(0.0, 0.0));
        let mm = m as i64;
        for (k, c) in u.modes() {
            out[k.rem_euclid(mm) as usize] += c;
        }
        let plan = self.inverse_plan(m);
        self.run(plan, out);
        if conjugate {
            for z in out.iter_mut() {
                *z = z.conj();
            }
        }
    }

    /// Forward transform of grid values (overwritten) into modes `|k| <= cutoff`.
    pub fn analyze(&mut self, values: &mut [Complex64], cutoff: usize) -> SpectralField {
        let m = values.len();
        let plan = self.forward_plan(m);
        self.run(plan, values);
        let scale = 1.0 / m as f64;
        let mm = m as i64;
        SpectralField::from_fn(cutoff, |k| values[k.rem_euclid(mm) as usize] * scale)
    }

    /// Exact coefficients `|k| <= result_cutoff` of the pointwise product.
    pub fn product(&mut self, factors: &[Factor<'_>], result_cutoff: usize) -> Result<SpectralField, SpectralError> {
        let mut acc = self.product_values(factors, result_cutoff)?;
        Ok(self.analyze(&mut acc, result_cutoff))
    }

    /// `∫` of the pointwise product, exact for band-limited factors.
    pub fn product_integral(&mut self, factors: &[Factor<'_>]) -> Result<Complex64, SpectralError> {
        let acc = self.product_values(factors, 0)?;
        Ok(grid_mean(&acc) * (2.0 * PI))
    }

    fn product_values(&mut self, factors: &[Factor<'_>], result_cutoff: usize) -> Result<Vec<Complex64>, SpectralError> {
        if factors.is_empty() {
            return Err(SpectralError::EmptyProduct);
        }
        let degree: usize = factors.iter().map(|f| f.field.cutoff()).sum();
        let m = smooth_size(degree + result_cutoff + 1);
        let mut acc = Vec::new();
        self.synthesize(factors[0].field, m, factors[0].conjugate, &mut acc);
        let mut tmp = Vec::new();
        for f in &factors[1..] {
            self.synthesize(f.field, m, f.conjugate, &mut tmp);
            for (a, b) in acc.iter_mut().zip(&tmp) {
                *a *= *b;
            }
        }
        Ok(acc)
    }
}

/// Compensated mean of grid samples.
pub fn grid_mean(values: &[Complex64]) -> Complex64 {
    let mut re = NeumaierSum::default();
    let mut im = NeumaierSum::default();
    for z in values {
        re.add(z.re);
        im.add(z.im);
    }
    Complex64::new(re.value(), im.value()) / values.len() as f64
}

/// Exact Fourier coefficients of `∏ factors` for modes `|k| <= result_cutoff`.
pub fn dealiased_product(factors: &[Factor<'_>], result_cutoff: usize) -> Result<SpectralField, SpectralError> {
    Transforms::new().product(factors, result_cutoff)
}

/// `∫ ∏ factors dx`.
pub fn product_integral(factors: &[Factor<'_>]) -> Result<Complex64, SpectralError> {
    Transforms::new().product_integral(factors)
}
