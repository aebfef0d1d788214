use std::sync::Arc;

use crate::error::{Error, Result};
use crate::linalg::C64;
use crate::measure::{DiscreteMeasure, Domain};

use super::{ConstantAugmentedSystem, FunctionSystem, SharedSystem};

/// Below this value the Christoffel function is treated as zero. It sits
/// well under any genuine value but above squared rounding noise.
pub const CHRISTOFFEL_FLOOR: f64 = 1e-24;

/// `ψ_k(x) = φ_k(x)/√η(x)` with `η(x) = (1/m) Σ_k |φ_k(x)|²`.
///
/// Evaluating where `η` vanishes yields NaN; use [`try_eval`] to get a
/// [`Error::DegenerateChristoffel`] instead.
///
/// [`try_eval`]: ChristoffelRescaledSystem::try_eval
#[derive(Debug, Clone)]
pub struct ChristoffelRescaledSystem {
    base: SharedSystem,
    augmented: bool,
}

/// Rescales `base`, first appending the constant function unless
/// `constant_in_span` says it is already representable.
pub fn christoffel_rescale(base: SharedSystem, constant_in_span: bool) -> ChristoffelRescaledSystem {
    if constant_in_span {
        ChristoffelRescaledSystem { base, augmented: false }
    } else {
        ChristoffelRescaledSystem { base: Arc::new(ConstantAugmentedSystem::new(base)), augmented: true }
    }
}

impl ChristoffelRescaledSystem {
    /// The (possibly augmented) system being rescaled.
    pub fn base(&self) -> &SharedSystem {
        &self.base
    }

    pub fn augmented(&self) -> bool {
        self.augmented
    }

    /// `η(x)`.
    pub fn eta(&self, x: &[f64]) -> f64 {
        let v = self.base.eval(x);
        v.iter().map(|z| z.norm_sqr()).sum::<f64>() / v.len() as f64
    }

    pub fn try_eval(&self, x: &[f64]) -> Result<Vec<C64>> {
        let v = self.eval(x);
        if v.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::DegenerateChristoffel { point: x.to_vec() });
        }
        Ok(v)
    }

    /// Converts weights `α` of a design for `ψ` into weights `μᵢ = αᵢ/η(xᵢ)`
    /// of the corresponding design for the base system.
    pub fn base_weights(&self, measure: &DiscreteMeasure) -> Vec<f64> {
        measure.points.iter().zip(&measure.weights).map(|(x, w)| w / self.eta(x)).collect()
    }
}

impl FunctionSystem for ChristoffelRescaledSystem {
    fn len(&self) -> usize {
        self.base.len()
    }

    fn domain(&self) -> Domain {
        self.base.domain()
    }

    fn eval_into(&self, x: &[f64], out: &mut [C64]) {
        self.base.eval_into(x, out);
        let eta = out.iter().map(|z| z.norm_sqr()).sum::<f64>() / out.len() as f64;
        let f = if eta > CHRISTOFFEL_FLOOR { eta.sqrt().recip() } else { f64::NAN };
        for o in out.iter_mut() {
            *o *= f;
        }
    }

    fn jacobian_into(&self, x: &[f64], values: &mut [C64], jac: &mut [C64]) {
        let m = self.len();
        let d = self.point_dim();
        self.base.jacobian_into(x, values, jac);
        let eta = values.iter().map(|z| z.norm_sqr()).sum::<f64>() / m as f64;
        if !(eta > CHRISTOFFEL_FLOOR) {
            values.iter_mut().chain(jac.iter_mut()).for_each(|z| *z = C64::new(f64::NAN, f64::NAN));
            return;
        }
        // ∂η = (2/m) Σ Re(φ̄_k ∂φ_k)
        let mut deta = vec![0.0; d];
        for k in 0..m {
            for (j, de) in deta.iter_mut().enumerate() {
                *de += (values[k].conj() * jac[k * d + j]).re;
            }
        }
        deta.iter_mut().for_each(|v| *v *= 2.0 / m as f64);
        let s = eta.sqrt().recip();
        let s3 = 0.5 * s / eta;
        for k in 0..m {
            for j in 0..d {
                jac[k * d + j] = jac[k * d + j] * s - values[k] * (s3 * deta[j]);
            }
            values[k] *= s;
        }
    }

    fn has_jacobian(&self) -> bool {
        self.base.has_jacobian()
    }

    fn coordinate_scales(&self) -> Vec<f64> {
        self.base.coordinate_scales()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::index_set::MultiIndexSet;
    use crate::system::{jacobian_fd_error, sphere_system, trig_system, LinearCombinationSystem, TrigSystem};
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{SQRT_2, TAU};

    fn sqrt2_cos() -> SharedSystem {
        let trig: SharedSystem = Arc::new(TrigSystem::new(vec![vec![-1], vec![1]]).unwrap());
        let c = DMatrix::from_row_slice(1, 2, &[C64::new(SQRT_2 / 2.0, 0.0), C64::new(SQRT_2 / 2.0, 0.0)]);
        Arc::new(LinearCombinationSystem::new(trig, c).unwrap())
    }

    #[test]
    fn unimodular_trig_is_unchanged() {
        let base: SharedSystem = Arc::new(TrigSystem::new(vec![vec![0], vec![1], vec![-1]]).unwrap());
        let r = christoffel_rescale(base.clone(), true);
        assert_eq!(r.len(), 3);
        for x in [0.0, 0.17, 0.5] {
            assert!((r.eta(&[x]) - 1.0).abs() < 1e-15);
            let a = r.eval(&[x]);
            let b = base.eval(&[x]);
            for (u, v) in a.iter().zip(&b) {
                assert!((u - v).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn cosine_gets_augmented() {
        let r = christoffel_rescale(sqrt2_cos(), false);
        assert!(r.augmented());
        assert_eq!(r.len(), 2);
        for x in [0.0, 0.1, 0.25, 0.7] {
            let c = (TAU * x).cos();
            let expected = (1.0 + 2.0 * c * c) / 2.0;
            assert!((r.eta(&[x]) - expected).abs() < 1e-14);
        }
    }

    #[test]
    fn sphere_has_constant() {
        let r = christoffel_rescale(Arc::new(sphere_system(2)), true);
        assert_eq!(r.len(), 9);
    }

    #[test]
    fn norm_identity_holds() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let systems: Vec<ChristoffelRescaledSystem> = vec![
            christoffel_rescale(sqrt2_cos(), false),
            christoffel_rescale(Arc::new(trig_system(MultiIndexSet::l1_ball(2, 2).unwrap())), true),
        ];
        for r in &systems {
            let d = r.point_dim();
            for _ in 0..10_000 {
                let x: Vec<f64> = (0..d).map(|_| rng.random()).collect();
                let s: f64 = r.eval(&x).iter().map(|z| z.norm_sqr()).sum();
                assert!((s - r.len() as f64).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn degenerate_point_is_reported() {
        // √2 cos vanishes at 1/4 without augmentation.
        let r = christoffel_rescale(sqrt2_cos(), true);
        assert!(matches!(r.try_eval(&[0.25]), Err(Error::DegenerateChristoffel { .. })));
        assert!(r.try_eval(&[0.1]).is_ok());
    }

    #[test]
    fn jacobian_matches_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let r = christoffel_rescale(sqrt2_cos(), false);
        let pts: Vec<Vec<f64>> = (0..100).map(|_| vec![rng.random()]).collect();
        assert!(jacobian_fd_error(&r, &pts, 1e-6) < 1e-6);
    }
}
