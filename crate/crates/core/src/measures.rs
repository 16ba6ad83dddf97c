//! Gaussian measures `μ_n`, the weighted densities `F_{n,R,N}` and the
//! Monte-Carlo machinery built on them.
//!
//! A sample of `μ_n` truncated at `|j| <= K` is
//! `û_j = g_j / sqrt(2π(1 + j^{2n}))` with independent standard complex
//! Gaussians `g_j` (`E g = 0`, `E|g|² = 1`, each real component `N(0, 1/2)`).
//!
//! Randomness always comes from `(seed, stream)` pairs: sample `i` of an
//! experiment uses a stream derived from the experiment stream and `i`, so
//! results do not depend on how samples are spread over threads.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::flow::{default_dt, FlowError, LowBand};
use crate::hierarchy::{w_sequence_with, HierarchyError};
use crate::numeric::{wls, NeumaierSum};
use crate::spectral::{SpectralField, Transforms};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MeasureError {
    #[error("invalid measure parameters: {0}")]
    Params(String),
    #[error("{flagged} of {total} samples produced non-finite values")]
    TooManyFlagged { flagged: usize, total: usize },
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Hierarchy(#[from] HierarchyError),
}

/// Level `n`, truncation `K`, seed and stream of a sampler.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GaussianSamplerSpec {
    pub n: usize,
    pub cutoff_k: usize,
    pub seed: u64,
    pub stream_id: u64,
}

impl GaussianSamplerSpec {
    pub fn new(n: usize, cutoff_k: usize, seed: u64, stream: &str) -> Self {
        GaussianSamplerSpec {
            n,
            cutoff_k,
            seed,
            stream_id: named_stream(stream),
        }
    }

    /// Spec of sample `index` within this experiment stream.
    pub fn for_sample(&self, index: u64) -> Self {
        GaussianSamplerSpec {
            stream_id: derive_stream(self.stream_id, index),
            ..*self
        }
    }

    pub fn with_stream(&self, stream: &str) -> Self {
        GaussianSamplerSpec {
            stream_id: derive_stream(self.stream_id, named_stream(stream)),
            ..*self
        }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream_id);
        rng
    }
}

/// FNV-1a hash of a stream name.
pub fn named_stream(name: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Child stream `index` of `base`.
pub fn derive_stream(base: u64, index: u64) -> u64 {
    splitmix64(base ^ splitmix64(index))
}

/// One standard complex Gaussian.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Standard complex Gaussians `g_{-K}, …, g_K` from the sampler stream.
pub fn sample_gaussians(spec: &GaussianSamplerSpec) -> Vec<Complex64> {
    let mut rng = spec.rng();
    (0..2 * spec.cutoff_k + 1).map(|_| complex_gaussian(&mut rng)).collect()
}

/// Standard deviation of mode `j` under `μ_n`.
pub fn mode_std(j: i64, n: usize) -> f64 {
    (2.0 * PI * (1.0 + (j as f64).powi(2 * n as i32))).sqrt().recip()
}

/// Field of `μ_n` built from given Gaussians indexed `-K..=K`.
pub fn field_from_gaussians(g: &[Complex64], n: usize) -> SpectralField {
    let k = (g.len() / 2) as i64;
    SpectralField::from_fn(k as usize, |j| g[(j + k) as usize] * mode_std(j, n))
}

pub fn sample_mu(spec: &GaussianSamplerSpec) -> SpectralField {
    field_from_gaussians(&sample_gaussians(spec), spec.n)
}

/// `E ‖u‖²_{H^s}` under `μ_n` truncated at `K`.
pub fn expected_sobolev_sq(n: usize, cutoff_k: usize, s: f64) -> f64 {
    let k = cutoff_k as i64;
    crate::numeric::compensated_sum(
        (-k..=k).map(|j| (1.0 + (j * j) as f64).powf(s) / (1.0 + (j as f64).powi(2 * n as i32))),
    )
}

/// Radius `R` of the cutoff `χ_R(x) = χ(x/R)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CutoffSpec {
    pub r: f64,
}

/// The bump: 1 on `[-1, 1]`, `exp(1 - 1/(1 - (|x|-1)²))` for `1 < |x| < 2`,
/// 0 beyond.
pub fn chi(x: f64) -> f64 {
    let a = x.abs();
    if a <= 1.0 {
        1.0
    } else if a < 2.0 {
        let y = a - 1.0;
        (1.0 - 1.0 / (1.0 - y * y)).exp()
    } else {
        0.0
    }
}

pub fn chi_prime(x: f64) -> f64 {
    let a = x.abs();
    if a <= 1.0 || a >= 2.0 {
        return 0.0;
    }
    let y = a - 1.0;
    let d = 1.0 - y * y;
    chi(x) * (-2.0 * y / (d * d)) * x.signum()
}

/// `χ(x/R)`, or `χ'(x/R)/R` when `derivative` is set.
pub fn chi_r(x: f64, c: &CutoffSpec, derivative: bool) -> f64 {
    if derivative {
        chi_prime(x / c.r) / c.r
    } else {
        chi(x / c.r)
    }
}

/// Pieces of `F_{n,R,N}(u)`. `remainder` is `None` when a cutoff vanished
/// and the exponential was never evaluated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedDensity {
    pub value: f64,
    pub cutoffs: Vec<f64>,
    pub remainder: Option<f64>,
}

/// `∏_{l<n} χ_R(E_{2l+1}(Π_N u)) · exp(-R_n(Π_N u))`.
pub fn weighted_density(u: &SpectralField, n: usize, r: f64, cutoff_n: usize) -> Result<f64, MeasureError> {
    Ok(weighted_density_detail(&mut Transforms::new(), u, n, r, cutoff_n)?.value)
}

pub fn weighted_density_detail(tr: &mut Transforms, u: &SpectralField, n: usize, r: f64, cutoff_n: usize) -> Result<WeightedDensity, MeasureError> {
    if n < 2 {
        return Err(MeasureError::Params(format!("density needs n >= 2, got {n}")));
    }
    let c = CutoffSpec { r };
    let nn = cutoff_n.min(u.cutoff());
    let low = u.project_low(nn).with_cutoff(nn);
    let first = chi_r(low.l2_norm_sq(), &c, false);
    if first == 0.0 {
        return Ok(WeightedDensity {
            value: 0.0,
            cutoffs: vec![0.0],
            remainder: None,
        });
    }
    let seq = w_sequence_with(tr, &low, 2 * n + 1)?;
    let mut cutoffs = vec![first];
    let mut weight = first;
    for l in 1..n {
        let x = chi_r(seq.energy(2 * l + 1), &c, false);
        cutoffs.push(x);
        weight *= x;
        if x == 0.0 {
            return Ok(WeightedDensity {
                value: 0.0,
                cutoffs,
                remainder: None,
            });
        }
    }
    let rem = seq.energy(2 * n + 1) - low.derivative_norm_sq(n as u32);
    Ok(WeightedDensity {
        value: weight * (-rem).exp(),
        cutoffs,
        remainder: Some(rem),
    })
}

/// Upper bound `p` with `F_{2,R,N} <= exp(p)` on the whole support of the
/// cutoffs. There `E_1, E_3 <= 2R`, hence `‖u‖²_{H¹} <= 4R` and
/// `‖u‖²_∞ <= coth(π)/2 · ‖u‖²_{H¹}`; then
/// `|R_2| <= 10 ‖u‖²_∞ ‖∂u‖² + 2 ‖u‖⁴_∞ ‖u‖²`.
pub fn density_log_bound(n: usize, r: f64) -> Result<f64, MeasureError> {
    if n != 2 {
        return Err(MeasureError::Params(format!("sup bound implemented for n = 2 only, got {n}")));
    }
    let l2 = 2.0 * r;
    let d = 2.0 * r;
    let sup = 0.5 / PI.tanh() * (l2 + d);
    Ok(10.0 * sup * d + 2.0 * sup * sup * l2)
}

/// Mean, standard error and bookkeeping of a Monte-Carlo average.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub n_samples: usize,
    pub n_flagged: usize,
    pub seed: u64,
}

impl McEstimate {
    /// Folds values in index order. Non-finite values are counted in
    /// `n_flagged` and left out of the mean.
    pub fn from_values(values: &[f64], seed: u64) -> Self {
        let mut sum = NeumaierSum::default();
        let mut count = 0usize;
        for v in values.iter().filter(|v| v.is_finite()) {
            sum.add(*v);
            count += 1;
        }
        let mean = if count > 0 { sum.value() / count as f64 } else { f64::NAN };
        let mut ss = NeumaierSum::default();
        for v in values.iter().filter(|v| v.is_finite()) {
            ss.add((v - mean) * (v - mean));
        }
        let stderr = if count > 1 {
            (ss.value() / (count - 1) as f64 / count as f64).sqrt()
        } else {
            f64::NAN
        };
        McEstimate {
            mean,
            stderr,
            n_samples: count,
            n_flagged: values.len() - count,
            seed,
        }
    }

    /// `|mean - target| / stderr`, or 0 when both vanish.
    pub fn z_score(&self, target: f64) -> f64 {
        let d = (self.mean - target).abs();
        if d == 0.0 {
            0.0
        } else {
            d / self.stderr
        }
    }
}

/// Evaluates `f(i)` for `i < count`, in parallel when the feature is on, and
/// returns the values in index order.
pub fn map_indexed<T, F>(count: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..count).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..count).map(f).collect()
    }
}

/// Values of `functional` on samples `0..n_samples` of the sampler.
pub fn sample_values<F>(functional: F, spec: &GaussianSamplerSpec, n_samples: usize) -> Vec<f64>
where
    F: Fn(&SpectralField) -> f64 + Sync + Send,
{
    map_indexed(n_samples, |i| functional(&sample_mu(&spec.for_sample(i as u64))))
}

pub fn mc_expectation<F>(functional: F, spec: &GaussianSamplerSpec, n_samples: usize) -> Result<McEstimate, MeasureError>
where
    F: Fn(&SpectralField) -> f64 + Sync + Send,
{
    if n_samples < 2 {
        return Err(MeasureError::Params("need at least two samples".into()));
    }
    Ok(McEstimate::from_values(&sample_values(functional, spec, n_samples), spec.seed))
}

/// Exceedance probabilities and the weighted fit of `log P` against `M²`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailReport {
    pub thresholds: Vec<f64>,
    pub estimates: Vec<McEstimate>,
    pub fit: Option<TailFit>,
    /// Thresholds left out of the fit (too few exceedances, or none missed).
    pub excluded: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailFit {
    pub slope: f64,
    pub stderr: f64,
    pub t_stat: f64,
}

/// Minimum number of exceedances for a threshold to enter the fit.
pub const MIN_EXCEEDANCES: usize = 10;

pub fn tail_probability(spec: &GaussianSamplerSpec, s: f64, thresholds: &[f64], n_samples: usize) -> Result<TailReport, MeasureError> {
    if s >= spec.n as f64 - 0.5 {
        return Err(MeasureError::Params(format!(
            "μ_{} is not supported on H^{s}; need s < {}",
            spec.n,
            spec.n as f64 - 0.5
        )));
    }
    if n_samples < 2 {
        return Err(MeasureError::Params("need at least two samples".into()));
    }
    let norms = sample_values(|u| u.sobolev_norm(s), spec, n_samples);
    let mut estimates = Vec::new();
    let (mut xs, mut ys, mut ws) = (Vec::new(), Vec::new(), Vec::new());
    let mut excluded = Vec::new();
    for &m in thresholds {
        let ind: Vec<f64> = norms.iter().map(|x| if *x > m { 1.0 } else { 0.0 }).collect();
        let count = ind.iter().filter(|v| **v > 0.0).count();
        estimates.push(McEstimate::from_values(&ind, spec.seed));
        if count < MIN_EXCEEDANCES || count == n_samples {
            excluded.push(m);
            continue;
        }
        let p = count as f64 / n_samples as f64;
        xs.push(m * m);
        ys.push(p.ln());
        ws.push(n_samples as f64 * p / (1.0 - p));
    }
    let fit = if xs.len() >= 2 {
        wls(&xs, &ys, &ws).map(|f| TailFit {
            slope: f.slope,
            stderr: f.slope_stderr,
            t_stat: f.slope / f.slope_stderr,
        })
    } else {
        None
    };
    Ok(TailReport {
        thresholds: thresholds.to_vec(),
        estimates,
        fit,
        excluded,
    })
}

/// Median and standard deviation of `‖u‖_{H^s}` over samples of the sampler.
pub fn norm_statistics(spec: &GaussianSamplerSpec, s: f64, n_samples: usize) -> (f64, f64) {
    let mut norms = sample_values(|u| u.sobolev_norm(s), spec, n_samples);
    norms.sort_by(f64::total_cmp);
    let median = if norms.is_empty() {
        f64::NAN
    } else if norms.len() % 2 == 1 {
        norms[norms.len() / 2]
    } else {
        0.5 * (norms[norms.len() / 2 - 1] + norms[norms.len() / 2])
    };
    let est = McEstimate::from_values(&norms, spec.seed);
    (median, est.stderr * (est.n_samples as f64).sqrt())
}

/// Parameters of the almost-invariance experiment. The set `A` is the
/// centered ball of the given radius in `H^s`; `radius = inf` is the whole
/// space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvarianceSetup {
    pub radius: f64,
    pub s: f64,
    pub t: f64,
    pub n: usize,
    pub r: f64,
    pub ladder: Vec<usize>,
    /// Fixed step; `None` uses the default step of each sample.
    pub dt: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InvarianceRow {
    pub cutoff_n: usize,
    pub defect: McEstimate,
}

/// Largest tolerated fraction of flagged samples.
pub const MAX_FLAGGED_FRACTION: f64 = 1e-3;

/// Estimates `ρ_{n,R,N}(Φ_N(t)A) - ρ_{n,R,N}(A)` for every `N` of the
/// ladder as the mean of `F_{n,R,N}(u) · (1_A(Φ_N(-t)u) - 1_A(u))` over
/// `u ~ μ_n`. The same samples are used for every `N`.
pub fn almost_invariance(setup: &InvarianceSetup, spec: &GaussianSamplerSpec, n_samples: usize) -> Result<Vec<InvarianceRow>, MeasureError> {
    if n_samples < 2 {
        return Err(MeasureError::Params("need at least two samples".into()));
    }
    if let Some(&nmax) = setup.ladder.iter().max() {
        if spec.cutoff_k < 3 * nmax + 1 {
            return Err(MeasureError::Params(format!(
                "sample cutoff {} below 3N+1 = {}",
                spec.cutoff_k,
                3 * nmax + 1
            )));
        }
    }
    let rows: Vec<Vec<f64>> = map_indexed(n_samples, |i| {
        let u = sample_mu(&spec.for_sample(i as u64));
        let mut tr = Transforms::new();
        setup
            .ladder
            .iter()
            .map(|&nn| invariance_sample(&mut tr, &u, setup, nn))
            .collect()
    });
    let mut out = Vec::new();
    for (col, &nn) in setup.ladder.iter().enumerate() {
        let vals: Vec<f64> = rows.iter().map(|r| r[col]).collect();
        let est = McEstimate::from_values(&vals, spec.seed);
        if est.n_flagged as f64 > MAX_FLAGGED_FRACTION * n_samples as f64 {
            return Err(MeasureError::TooManyFlagged {
                flagged: est.n_flagged,
                total: n_samples,
            });
        }
        out.push(InvarianceRow { cutoff_n: nn, defect: est });
    }
    Ok(out)
}

fn invariance_sample(tr: &mut Transforms, u: &SpectralField, setup: &InvarianceSetup, nn: usize) -> f64 {
    if setup.t == 0.0 || setup.radius == f64::INFINITY {
        return 0.0;
    }
    let f = match weighted_density_detail(tr, u, setup.n, setup.r, nn) {
        Ok(w) => w.value,
        Err(_) => return f64::NAN,
    };
    if f == 0.0 {
        return 0.0;
    }
    let r2 = setup.radius * setup.radius;
    let before = u.sobolev_norm_sq(setup.s) <= r2;
    let low = u.project_low(nn).with_cutoff(nn);
    let tail = u.project_high(nn).sobolev_norm_sq(setup.s);
    let dt = setup.dt.unwrap_or_else(|| default_dt(&low, nn));
    let steps = (setup.t / dt).ceil().max(1.0) as usize;
    let mut v = low.coeffs().to_vec();
    if LowBand::new(nn).advance(&mut v, -setup.t, steps).is_err() {
        return f64::NAN;
    }
    let moved = SpectralField::from_coeffs(nn, v).expect("low band length");
    let after = moved.sobolev_norm_sq(setup.s) + tail <= r2;
    f * (after as i32 - before as i32) as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chi_profile_values() {
        let c = CutoffSpec { r: 3.0 };
        assert_eq!(chi_r(0.0, &c, false), 1.0);
        assert_eq!(chi_r(0.0, &c, true), 0.0);
        assert_eq!(chi_r(6.0, &c, false), 0.0);
        assert_eq!(chi_r(-7.5, &c, false), 0.0);
        assert!((chi_r(4.5, &c, false) - (-1.0f64 / 3.0).exp()).abs() < 1e-15);
    }

    #[test]
    fn chi_derivative_matches_difference_quotient() {
        for x in [1.2, 1.5, 1.9, -1.3] {
            let h = 1e-6;
            let fd = (chi(x + h) - chi(x - h)) / (2.0 * h);
            assert!((fd - chi_prime(x)).abs() < 1e-6, "x = {x}");
        }
    }

    #[test]
    fn sampler_is_deterministic_and_stream_sensitive() {
        let spec = GaussianSamplerSpec::new(2, 8, 42, "sampler");
        assert_eq!(sample_mu(&spec), sample_mu(&spec));
        assert_ne!(sample_mu(&spec), sample_mu(&spec.for_sample(1)));
        let again = GaussianSamplerSpec { seed: 43, ..spec };
        assert_ne!(sample_mu(&spec), sample_mu(&again));
    }

    #[test]
    fn zero_band_sample_is_constant() {
        let spec = GaussianSamplerSpec::new(2, 0, 1, "sampler");
        assert_eq!(sample_mu(&spec).coeffs().len(), 1);
    }

    #[test]
    fn density_of_zero_and_of_large_fields() {
        assert_eq!(weighted_density(&SpectralField::zeros(4), 2, 5.0, 4).unwrap(), 1.0);
        let big = SpectralField::constant(4, Complex64::new(10.0, 0.0));
        assert_eq!(weighted_density(&big, 2, 5.0, 4).unwrap(), 0.0);
        assert!(weighted_density(&big, 1, 5.0, 4).is_err());
    }

    #[test]
    fn density_on_small_plane_wave() {
        let e = 0.3;
        let u = SpectralField::plane_wave(3, 1, Complex64::new(e, 0.0)).unwrap();
        let want = (-(6.0 * 2.0 * PI * e.powi(4) + 2.0 * 2.0 * PI * e.powi(6))).exp();
        assert!((weighted_density(&u, 2, 10.0, 3).unwrap() - want).abs() < 1e-13);
    }

    #[test]
    fn constant_functional_has_zero_error() {
        let spec = GaussianSamplerSpec::new(2, 4, 7, "mc");
        let est = mc_expectation(|_| 2.5, &spec, 10).unwrap();
        assert_eq!((est.mean, est.stderr, est.n_samples), (2.5, 0.0, 10));
        assert!(mc_expectation(|_| 1.0, &spec, 1).is_err());
    }

    #[test]
    fn flagged_values_are_counted() {
        let est = McEstimate::from_values(&[1.0, f64::NAN, 3.0], 0);
        assert_eq!((est.mean, est.n_samples, est.n_flagged), (2.0, 2, 1));
    }

    #[test]
    fn tail_rejects_unsupported_regularity() {
        let spec = GaussianSamplerSpec::new(2, 4, 7, "mc");
        assert!(tail_probability(&spec, 1.5, &[1.0], 10).is_err());
        let rep = tail_probability(&spec, 1.0, &[0.0, 1e6], 50).unwrap();
        assert_eq!(rep.estimates[0].mean, 1.0);
        assert_eq!(rep.estimates[1].mean, 0.0);
        assert_eq!(rep.excluded.len(), 2);
    }

    #[test]
    fn density_bound_only_for_level_two() {
        assert!(density_log_bound(3, 1.0).is_err());
        assert!(density_log_bound(2, 1.0).unwrap() > 0.0);
    }
}
