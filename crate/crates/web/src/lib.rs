//! wasm-bindgen wrapper used by `www/index.html`.
//!
//! The page keeps one [`Demo`] state: a field drawn from the Gaussian
//! measure, evolved on request by the truncated flow. [`decay_curve`] is
//! independent of that state.

use mkdv_core::flow::{default_dt, evolve, FlowParams};
use mkdv_core::hierarchy::energies;
use mkdv_core::measures::{sample_mu, GaussianSamplerSpec};
use mkdv_core::pairing::{annal_bound, CoefficientKind, FamilyTag};
use mkdv_core::SpectralField;
use wasm_bindgen::prelude::*;

fn js_err(e: impl std::fmt::Display) -> JsError {
    JsError::new(&e.to_string())
}

#[wasm_bindgen]
pub struct Demo {
    u: SpectralField,
    cutoff_n: usize,
    time: f64,
}

#[wasm_bindgen]
impl Demo {
    /// Draws a field from `μ_level` with `K = 3N+1` modes, scaled by `amplitude`.
    #[wasm_bindgen(constructor)]
    pub fn new(seed: u64, level: usize, cutoff_n: usize, amplitude: f64) -> Result<Demo, JsError> {
        if cutoff_n == 0 || cutoff_n > 64 {
            return Err(js_err(format!("N must be in 1..=64, got {cutoff_n}")));
        }
        let k = 3 * cutoff_n + 1;
        let u = sample_mu(&GaussianSamplerSpec::new(level, k, seed, "web")).scale_real(amplitude);
        Ok(Demo { u, cutoff_n, time: 0.0 })
    }

    /// Advances the state by `dt_total` with the default step.
    pub fn advance(&mut self, dt_total: f64) -> Result<(), JsError> {
        let p = FlowParams::new(self.cutoff_n, self.u.cutoff(), default_dt(&self.u, self.cutoff_n)).map_err(js_err)?;
        self.u = evolve(&self.u, dt_total, &p).map_err(js_err)?;
        self.time += dt_total;
        Ok(())
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    /// `Re u, Im u` on `points` equally spaced grid points, concatenated.
    pub fn profile(&self, points: usize) -> Result<Vec<f64>, JsError> {
        let grid = self.u.to_grid(points.max(2 * self.u.cutoff() + 1)).map_err(js_err)?;
        let vals = grid.values();
        Ok(vals.iter().map(|z| z.re).chain(vals.iter().map(|z| z.im)).collect())
    }

    /// `E_1 … E_5` of `Π_N u`.
    pub fn energies(&self) -> Result<Vec<f64>, JsError> {
        energies(&self.u.project_low(self.cutoff_n).with_cutoff(self.cutoff_n), 5).map_err(js_err)
    }

    /// `log10 |û_k|²` for `k = -K..=K`.
    pub fn spectrum(&self) -> Vec<f64> {
        self.u.modes().map(|(_, c)| c.norm_sqr().max(1e-300).log10()).collect()
    }
}

/// `(N, bound)` pairs, flattened, for `N = 1..=max_n`.
#[wasm_bindgen]
pub fn decay_curve(family: &str, kind: &str, max_n: usize) -> Result<Vec<f64>, JsError> {
    let f: FamilyTag = family.parse().map_err(js_err)?;
    let kind: CoefficientKind = kind.parse().map_err(js_err)?;
    Ok((1..=max_n.min(24)).flat_map(|n| [n as f64, annal_bound(n, f, kind)]).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn demo_round_trip() {
        let mut d = Demo::new(1, 2, 4, 1.0).ok().unwrap();
        let e0 = d.energies().ok().unwrap();
        d.advance(0.1).ok().unwrap();
        let e1 = d.energies().ok().unwrap();
        assert!((e0[0] - e1[0]).abs() < 1e-8 * e0[0]);
        assert_eq!(d.profile(32).ok().unwrap().len(), 64);
        assert_eq!(d.spectrum().len(), 27);
    }

    #[test]
    fn decay_curve_shape() {
        let v = decay_curve("I0", "A", 6).ok().unwrap();
        assert_eq!(v.len(), 12);
        assert!(v[11] < v[7]);
    }
}
