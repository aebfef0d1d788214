//! Basis systems `φ(x) ∈ ℂⁿ` and their spatial Jacobians.

use std::fmt::Debug;
use std::sync::Arc;

use rand::RngCore;

use crate::index_set::MultiIndexSet;
use crate::linalg::{HermitianMatrix, C64};
use crate::measure::{DiscreteMeasure, Domain};

mod christoffel;
mod density;
mod generic;
mod sphere;
mod torus;

pub use christoffel::{christoffel_rescale, ChristoffelRescaledSystem};
pub use density::{density_modified_system, DensityModifiedSystem};
pub use generic::{ConstantAugmentedSystem, LinearCombinationSystem, ProductLiftSystem};
pub use sphere::{gauss_legendre, sphere_monomial_integral, sphere_product_rule, sphere_system, SphereSystem};
pub use torus::{trig_phase, trig_system, TrigSystem};

/// Evaluation contract for a finite family of continuous functions.
///
/// `jacobian_into` writes the `n × d` Jacobian row-major:
/// `jac[k * d + j] = ∂φ_k/∂x_j`.
pub trait FunctionSystem: Send + Sync + Debug {
    /// Number of functions `n`.
    fn len(&self) -> usize;

    fn domain(&self) -> Domain;

    fn eval_into(&self, x: &[f64], out: &mut [C64]);

    /// Writes values and Jacobian. Systems without a Jacobian leave `jac`
    /// untouched and report `has_jacobian() == false`.
    fn jacobian_into(&self, x: &[f64], values: &mut [C64], jac: &mut [C64]);

    fn has_jacobian(&self) -> bool {
        true
    }

    /// Gram matrix `∫ φ φ* dμ` with respect to the reference measure, when
    /// known in closed form.
    fn exact_gram(&self) -> Option<HermitianMatrix> {
        None
    }

    /// `∫ φ_k dμ` when known in closed form.
    fn integrals(&self) -> Option<Vec<C64>> {
        None
    }

    /// The frequency set for trigonometric systems.
    fn frequencies(&self) -> Option<&MultiIndexSet> {
        None
    }

    /// Per-coordinate scale that makes one unit of the scaled variable
    /// roughly one radian of phase. Used to precondition point updates.
    fn coordinate_scales(&self) -> Vec<f64> {
        vec![1.0; self.point_dim()]
    }

    /// A positive-weight rule that integrates products `φ_k φ̄_l · φ_r φ̄_s`
    /// exactly. Needed for numerical Gram computations on lifted spaces.
    fn reference_rule(&self, _product_order: usize) -> Option<DiscreteMeasure> {
        None
    }

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn point_dim(&self) -> usize {
        self.domain().point_dim()
    }

    fn eval(&self, x: &[f64]) -> Vec<C64> {
        let mut out = vec![C64::new(0.0, 0.0); self.len()];
        self.eval_into(x, &mut out);
        out
    }

    /// Returns `(values, jacobian)`.
    fn jacobian(&self, x: &[f64]) -> (Vec<C64>, Vec<C64>) {
        let mut values = vec![C64::new(0.0, 0.0); self.len()];
        let mut jac = vec![C64::new(0.0, 0.0); self.len() * self.point_dim()];
        self.jacobian_into(x, &mut values, &mut jac);
        (values, jac)
    }

    fn sample_point(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        self.domain().sample(rng)
    }
}

pub type SharedSystem = Arc<dyn FunctionSystem>;

impl<T: FunctionSystem + ?Sized> FunctionSystem for Arc<T> {
    fn len(&self) -> usize {
        (**self).len()
    }
    fn domain(&self) -> Domain {
        (**self).domain()
    }
    fn eval_into(&self, x: &[f64], out: &mut [C64]) {
        (**self).eval_into(x, out)
    }
    fn jacobian_into(&self, x: &[f64], values: &mut [C64], jac: &mut [C64]) {
        (**self).jacobian_into(x, values, jac)
    }
    fn has_jacobian(&self) -> bool {
        (**self).has_jacobian()
    }
    fn exact_gram(&self) -> Option<HermitianMatrix> {
        (**self).exact_gram()
    }
    fn integrals(&self) -> Option<Vec<C64>> {
        (**self).integrals()
    }
    fn frequencies(&self) -> Option<&MultiIndexSet> {
        (**self).frequencies()
    }
    fn coordinate_scales(&self) -> Vec<f64> {
        (**self).coordinate_scales()
    }
    fn reference_rule(&self, product_order: usize) -> Option<DiscreteMeasure> {
        (**self).reference_rule(product_order)
    }
}

/// Maximum relative deviation between the analytic Jacobian and central
/// differences of `eval` with step `h`, over the given points.
pub fn jacobian_fd_error(system: &dyn FunctionSystem, points: &[Vec<f64>], h: f64) -> f64 {
    let d = system.point_dim();
    let n = system.len();
    let mut worst: f64 = 0.0;
    for x in points {
        let (_, jac) = system.jacobian(x);
        let scale = jac.iter().map(|z| z.norm()).fold(1.0, f64::max);
        for j in 0..d {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[j] += h;
            xm[j] -= h;
            let fp = system.eval(&xp);
            let fm = system.eval(&xm);
            for k in 0..n {
                let fd = (fp[k] - fm[k]) / (2.0 * h);
                worst = worst.max((fd - jac[k * d + j]).norm() / scale);
            }
        }
    }
    worst
}
