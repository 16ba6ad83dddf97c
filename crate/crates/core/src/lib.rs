//! Numerics for the periodic defocusing modified KdV hierarchy and its
//! weighted Gaussian measures.
//!
//! Fields are band-limited trigonometric polynomials on the torus
//! `[0, 2π)`, stored as coefficients `û_k`, `|k| <= K`, with
//! `u(x) = Σ û_k e^{ikx}`. Nonlinear products are evaluated on alias-free
//! grids.
//!
//! - [`spectral`]: fields, Sobolev norms, dealiased products.
//! - [`hierarchy`]: the conserved energies `E_n` and their leading parts.
//! - [`flow`]: the truncated flow, conservation diagnostics and the
//!   energy-derivative defects `E*_{j,N}`.
//! - [`measures`]: Gaussian sampling, cutoffs, tails and almost invariance.
//! - [`pairing`]: index families, coefficient sums and second moments.

pub mod flow;
pub mod hierarchy;
pub mod measures;
pub mod numeric;
pub mod pairing;
pub mod spectral;

pub use num_complex::Complex64;
pub use spectral::SpectralField;
