use nalgebra::DMatrix;

use crate::error::{invalid, Result};
use crate::linalg::{mat_vec, HermitianMatrix, C64};
use crate::measure::{DiscreteMeasure, Domain};

use super::{FunctionSystem, SharedSystem};

/// `φ(x) = C·b(x)` for a base system `b` and a fixed complex matrix `C`.
#[derive(Debug, Clone)]
pub struct LinearCombinationSystem {
    base: SharedSystem,
    coeffs: DMatrix<C64>,
}

impl LinearCombinationSystem {
    pub fn new(base: SharedSystem, coeffs: DMatrix<C64>) -> Result<Self> {
        if coeffs.ncols() != base.len() || coeffs.nrows() == 0 {
            return Err(invalid(format!(
                "coefficient matrix is {}x{}, base system has {} functions",
                coeffs.nrows(),
                coeffs.ncols(),
                base.len()
            )));
        }
        Ok(LinearCombinationSystem { base, coeffs })
    }

    pub fn coeffs(&self) -> &DMatrix<C64> {
        &self.coeffs
    }

    pub fn base(&self) -> &SharedSystem {
        &self.base
    }
}

impl FunctionSystem for LinearCombinationSystem {
    fn len(&self) -> usize {
        self.coeffs.nrows()
    }

    fn domain(&self) -> Domain {
        self.base.domain()
    }

    fn eval_into(&self, x: &[f64], out: &mut [C64]) {
        let b = self.base.eval(x);
        out.copy_from_slice(&mat_vec(&self.coeffs, &b));
    }

    fn jacobian_into(&self, x: &[f64], values: &mut [C64], jac: &mut [C64]) {
        let d = self.point_dim();
        let (b, bj) = self.base.jacobian(x);
        values.copy_from_slice(&mat_vec(&self.coeffs, &b));
        for r in 0..self.len() {
            for j in 0..d {
                jac[r * d + j] = (0..b.len()).map(|c| self.coeffs[(r, c)] * bj[c * d + j]).sum();
            }
        }
    }

    fn has_jacobian(&self) -> bool {
        self.base.has_jacobian()
    }

    fn exact_gram(&self) -> Option<HermitianMatrix> {
        let g = self.base.exact_gram()?;
        let m = &self.coeffs * g.matrix() * self.coeffs.adjoint();
        HermitianMatrix::new(m).ok()
    }

    fn integrals(&self) -> Option<Vec<C64>> {
        Some(mat_vec(&self.coeffs, &self.base.integrals()?))
    }

    fn coordinate_scales(&self) -> Vec<f64> {
        self.base.coordinate_scales()
    }

    fn reference_rule(&self, product_order: usize) -> Option<DiscreteMeasure> {
        self.base.reference_rule(product_order)
    }
}

/// Products `φ_{t₁}(x)···φ_{t_q}(x)` of base functions for a list of index tuples.
#[derive(Debug, Clone)]
pub struct ProductLiftSystem {
    base: SharedSystem,
    tuples: Vec<Vec<usize>>,
    order: usize,
}

impl ProductLiftSystem {
    pub fn new(base: SharedSystem, tuples: Vec<Vec<usize>>) -> Result<Self> {
        let order = tuples.first().map(|t| t.len()).unwrap_or(0);
        if order == 0 || tuples.iter().any(|t| t.len() != order || t.iter().any(|&i| i >= base.len())) {
            return Err(invalid("product tuples must be nonempty, of equal length, and index the base"));
        }
        Ok(ProductLiftSystem { base, tuples, order })
    }

    /// All nondecreasing `order`-tuples over the base functions.
    pub fn all_monomials(base: SharedSystem, order: usize) -> Result<Self> {
        let n = base.len();
        let mut tuples = Vec::new();
        let mut cur = vec![0usize; order];
        loop {
            tuples.push(cur.clone());
            let mut pos = order;
            while pos > 0 && cur[pos - 1] == n - 1 {
                pos -= 1;
            }
            if pos == 0 {
                break;
            }
            cur[pos - 1] += 1;
            let v = cur[pos - 1];
            for c in cur.iter_mut().skip(pos) {
                *c = v;
            }
        }
        Self::new(base, tuples)
    }

    pub fn tuples(&self) -> &[Vec<usize>] {
        &self.tuples
    }

    pub fn order(&self) -> usize {
        self.order
    }
}

impl FunctionSystem for ProductLiftSystem {
    fn len(&self) -> usize {
        self.tuples.len()
    }

    fn domain(&self) -> Domain {
        self.base.domain()
    }

    fn eval_into(&self, x: &[f64], out: &mut [C64]) {
        let b = self.base.eval(x);
        for (o, t) in out.iter_mut().zip(&self.tuples) {
            *o = t.iter().map(|&i| b[i]).product();
        }
    }

    fn jacobian_into(&self, x: &[f64], values: &mut [C64], jac: &mut [C64]) {
        let d = self.point_dim();
        let (b, bj) = self.base.jacobian(x);
        for (r, t) in self.tuples.iter().enumerate() {
            values[r] = t.iter().map(|&i| b[i]).product();
            for j in 0..d {
                let mut acc = C64::new(0.0, 0.0);
                for (pos, &i) in t.iter().enumerate() {
                    let others: C64 = t
                        .iter()
                        .enumerate()
                        .filter(|&(q, _)| q != pos)
                        .map(|(_, &o)| b[o])
                        .product();
                    acc += bj[i * d + j] * others;
                }
                jac[r * d + j] = acc;
            }
        }
    }

    fn has_jacobian(&self) -> bool {
        self.base.has_jacobian()
    }

    fn coordinate_scales(&self) -> Vec<f64> {
        self.base.coordinate_scales().into_iter().map(|s| s * self.order as f64).collect()
    }

    fn reference_rule(&self, product_order: usize) -> Option<DiscreteMeasure> {
        self.base.reference_rule(product_order * self.order)
    }
}

/// A base system followed by the constant function `1`.
#[derive(Debug, Clone)]
pub struct ConstantAugmentedSystem {
    base: SharedSystem,
}

impl ConstantAugmentedSystem {
    pub fn new(base: SharedSystem) -> Self {
        ConstantAugmentedSystem { base }
    }
}

impl FunctionSystem for ConstantAugmentedSystem {
    fn len(&self) -> usize {
        self.base.len() + 1
    }

    fn domain(&self) -> Domain {
        self.base.domain()
    }

    fn eval_into(&self, x: &[f64], out: &mut [C64]) {
        let n = self.base.len();
        self.base.eval_into(x, &mut out[..n]);
        out[n] = C64::new(1.0, 0.0);
    }

    fn jacobian_into(&self, x: &[f64], values: &mut [C64], jac: &mut [C64]) {
        let n = self.base.len();
        let d = self.point_dim();
        self.base.jacobian_into(x, &mut values[..n], &mut jac[..n * d]);
        values[n] = C64::new(1.0, 0.0);
        for c in &mut jac[n * d..(n + 1) * d] {
            *c = C64::new(0.0, 0.0);
        }
    }

    fn has_jacobian(&self) -> bool {
        self.base.has_jacobian()
    }

    fn integrals(&self) -> Option<Vec<C64>> {
        let mut v = self.base.integrals()?;
        v.push(C64::new(1.0, 0.0));
        Some(v)
    }

    /// `[[G, c], [c*, 1]]` with `c = ∫φ` and the reference measure a probability.
    fn exact_gram(&self) -> Option<HermitianMatrix> {
        let g = self.base.exact_gram()?;
        let c = self.base.integrals()?;
        let n = c.len();
        let m = DMatrix::from_fn(n + 1, n + 1, |r, k| match (r < n, k < n) {
            (true, true) => g.matrix()[(r, k)],
            (true, false) => c[r],
            (false, true) => c[k].conj(),
            (false, false) => C64::new(1.0, 0.0),
        });
        HermitianMatrix::new(m).ok()
    }

    fn coordinate_scales(&self) -> Vec<f64> {
        self.base.coordinate_scales()
    }

    fn reference_rule(&self, product_order: usize) -> Option<DiscreteMeasure> {
        self.base.reference_rule(product_order)
    }
}
