use std::sync::Arc;

use crate::error::{invalid, Error, Result};
use crate::linalg::C64;
use crate::measure::Domain;
use crate::spectrum::MercerSpectrum;

use super::FunctionSystem;

/// `φ_j = ψ_j/√ω` for the first `n` eigenfunctions, with
/// `ω(x) = 1/2 + Σ_{j≥n} σ_j²|ψ_j(x)|² / (2 Σ_{j≥n} σ_j²)`.
#[derive(Debug, Clone)]
pub struct DensityModifiedSystem {
    spectrum: Arc<dyn MercerSpectrum>,
    n: usize,
    tail: f64,
}

pub fn density_modified_system(spectrum: Arc<dyn MercerSpectrum>, n: usize) -> Result<DensityModifiedSystem> {
    if n == 0 || n >= spectrum.available() {
        return Err(invalid(format!(
            "truncation {n} must lie in 1..{} (available eigenpairs)",
            spectrum.available()
        )));
    }
    let tail = spectrum.tail_trace(n);
    if !(tail > 0.0) {
        return Err(Error::ZeroTail { n });
    }
    Ok(DensityModifiedSystem { spectrum, n, tail })
}

impl DensityModifiedSystem {
    pub fn spectrum(&self) -> &Arc<dyn MercerSpectrum> {
        &self.spectrum
    }

    pub fn truncation(&self) -> usize {
        self.n
    }

    pub fn tail_trace(&self) -> f64 {
        self.tail
    }

    /// `ω(x)`.
    pub fn omega(&self, x: &[f64]) -> f64 {
        0.5 + self.spectrum.tail_density(x, self.n) / (2.0 * self.tail)
    }
}

impl FunctionSystem for DensityModifiedSystem {
    fn len(&self) -> usize {
        self.n
    }

    fn domain(&self) -> Domain {
        self.spectrum.domain()
    }

    fn eval_into(&self, x: &[f64], out: &mut [C64]) {
        self.spectrum.eigenfunctions_into(x, out);
        let f = self.omega(x).sqrt().recip();
        out.iter_mut().for_each(|o| *o *= f);
    }

    fn jacobian_into(&self, x: &[f64], values: &mut [C64], jac: &mut [C64]) {
        let d = self.point_dim();
        self.spectrum.eigenfunction_jacobian_into(x, values, jac);
        let omega = self.omega(x);
        let mut domega = vec![0.0; d];
        self.spectrum.tail_density_gradient(x, self.n, &mut domega);
        domega.iter_mut().for_each(|g| *g /= 2.0 * self.tail);
        let s = omega.sqrt().recip();
        let s3 = 0.5 * s / omega;
        for k in 0..self.n {
            for j in 0..d {
                jac[k * d + j] = jac[k * d + j] * s - values[k] * (s3 * domega[j]);
            }
            values[k] *= s;
        }
    }

    fn coordinate_scales(&self) -> Vec<f64> {
        // Phase-unit scaling for the largest retained frequency when the
        // eigenfunctions are exponentials; harmless otherwise.
        let d = self.point_dim();
        let mut scales = vec![1.0; d];
        let x = vec![0.0; d];
        let mut values = vec![C64::new(0.0, 0.0); self.n];
        let mut jac = vec![C64::new(0.0, 0.0); self.n * d];
        self.spectrum.eigenfunction_jacobian_into(&x, &mut values, &mut jac);
        for (j, s) in scales.iter_mut().enumerate() {
            let m = (0..self.n).map(|k| jac[k * d + j].norm()).fold(0.0, f64::max);
            *s = m.max(1.0);
        }
        scales
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectrum::{FiniteSpectrum, SobolevTorusSpectrum};
    use crate::system::{jacobian_fd_error, sphere_system, SharedSystem};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn sobolev_density_is_one() {
        let spec = Arc::new(SobolevTorusSpectrum::new(1, 2.0, 20).unwrap());
        let sys = density_modified_system(spec.clone(), 5).unwrap();
        for x in [0.0, 0.3, 0.77] {
            assert!((sys.omega(&[x]) - 1.0).abs() < 1e-15);
            let a = sys.eval(&[x]);
            let b = spec.eigenfunctions(&[x], 5);
            for (u, v) in a.iter().zip(&b) {
                assert!((u - v).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn non_uniform_density_bounds_and_jacobian() {
        let base: SharedSystem = Arc::new(sphere_system(3));
        let sigmas: Vec<f64> = (0..16).map(|j| 0.5f64.powi(j)).collect();
        let spec = Arc::new(FiniteSpectrum::new(base, sigmas).unwrap());
        let sys = density_modified_system(spec, 4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let pts: Vec<Vec<f64>> = (0..100).map(|_| Domain::Sphere.sample(&mut rng)).collect();
        for x in &pts {
            assert!(sys.omega(x) >= 0.5);
        }
        assert!(jacobian_fd_error(&sys, &pts, 1e-6) < 1e-6);
        // ∫ω dμ = 1 on an exact rule for products of degree-3 harmonics.
        let rule = crate::system::sphere_product_rule(6);
        let integral: f64 = rule.points.iter().zip(&rule.weights).map(|(x, w)| w * sys.omega(x)).sum();
        assert!((integral - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_tail_is_rejected() {
        let base: SharedSystem = Arc::new(sphere_system(1));
        let spec = Arc::new(FiniteSpectrum::new(base, vec![1.0; 4]).unwrap());
        assert!(density_modified_system(spec.clone(), 3).is_ok());
        assert!(density_modified_system(spec, 4).is_err());
    }
}
