use std::f64::consts::TAU;

use crate::error::Result;
use crate::index_set::MultiIndexSet;
use crate::linalg::{HermitianMatrix, C64};
use crate::measure::{DiscreteMeasure, Domain};

use super::FunctionSystem;

/// Largest product grid `reference_rule` is willing to build.
const MAX_REFERENCE_POINTS: usize = 1 << 20;

/// `⟨k, x⟩ mod 1`, reduced to `[-1/2, 1/2]`.
///
/// Each product `k_j x_j` is split into its rounded value and the exact
/// rounding error (via FMA) before the integer part is discarded, so the
/// result stays accurate when `|k_j|` is large.
pub fn trig_phase(k: &[i64], x: &[f64]) -> f64 {
    let mut frac = 0.0;
    let mut err = 0.0;
    for (&kj, &xj) in k.iter().zip(x) {
        if kj == 0 {
            continue;
        }
        let kf = kj as f64;
        let p = kf * xj;
        err += kf.mul_add(xj, -p);
        frac += p - p.round();
    }
    let t = frac + err;
    t - t.round()
}

/// Trigonometric monomials `e^{2πi⟨k,x⟩}` for `k ∈ I`.
#[derive(Debug, Clone)]
pub struct TrigSystem {
    index_set: MultiIndexSet,
}

pub fn trig_system(index_set: MultiIndexSet) -> TrigSystem {
    TrigSystem { index_set }
}

impl TrigSystem {
    pub fn new(indices: Vec<Vec<i64>>) -> Result<Self> {
        Ok(trig_system(MultiIndexSet::new(indices)?))
    }

    pub fn index_set(&self) -> &MultiIndexSet {
        &self.index_set
    }

    /// Product grid that integrates every `e^{2πi⟨v,x⟩}` with
    /// `v` in the `order`-fold sum of `D(I)` exactly, or `None` if too large.
    pub fn product_grid(&self, order: usize) -> Option<DiscreteMeasure> {
        let d = self.index_set.dim();
        let mut sides = Vec::with_capacity(d);
        let mut total: usize = 1;
        for j in 0..d {
            let lo = self.index_set.iter().map(|k| k[j]).min()?;
            let hi = self.index_set.iter().map(|k| k[j]).max()?;
            let span = u64::try_from(hi - lo).ok()?;
            let side = usize::try_from(span.checked_mul(order.max(1) as u64)?.checked_add(1)?).ok()?;
            total = total.checked_mul(side)?;
            if total > MAX_REFERENCE_POINTS {
                return None;
            }
            sides.push(side);
        }
        let points = (0..total)
            .map(|mut idx| {
                let mut p = vec![0.0; d];
                for (c, &side) in p.iter_mut().zip(&sides).rev() {
                    *c = (idx % side) as f64 / side as f64;
                    idx /= side;
                }
                p
            })
            .collect();
        Some(DiscreteMeasure::uniform(points))
    }
}

impl FunctionSystem for TrigSystem {
    fn len(&self) -> usize {
        self.index_set.len()
    }

    fn domain(&self) -> Domain {
        Domain::Torus { dim: self.index_set.dim() }
    }

    fn eval_into(&self, x: &[f64], out: &mut [C64]) {
        for (o, k) in out.iter_mut().zip(self.index_set.iter()) {
            let (s, c) = (TAU * trig_phase(k, x)).sin_cos();
            *o = C64::new(c, s);
        }
    }

    fn jacobian_into(&self, x: &[f64], values: &mut [C64], jac: &mut [C64]) {
        let d = self.index_set.dim();
        self.eval_into(x, values);
        for (row, (k, v)) in self.index_set.iter().zip(values.iter()).enumerate() {
            let iv = C64::new(0.0, TAU) * v;
            for j in 0..d {
                jac[row * d + j] = iv * k[j] as f64;
            }
        }
    }

    fn exact_gram(&self) -> Option<HermitianMatrix> {
        Some(HermitianMatrix::identity(self.len()))
    }

    fn integrals(&self) -> Option<Vec<C64>> {
        Some(
            self.index_set
                .iter()
                .map(|k| {
                    let zero = k.iter().all(|&c| c == 0);
                    C64::new(if zero { 1.0 } else { 0.0 }, 0.0)
                })
                .collect(),
        )
    }

    fn frequencies(&self) -> Option<&MultiIndexSet> {
        Some(&self.index_set)
    }

    fn coordinate_scales(&self) -> Vec<f64> {
        self.index_set
            .max_abs_per_coordinate()
            .into_iter()
            .map(|m| TAU * (m.max(1) as f64))
            .collect()
    }

    fn reference_rule(&self, product_order: usize) -> Option<DiscreteMeasure> {
        self.product_grid(product_order)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::jacobian_fd_error;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn hand_values() {
        let s = TrigSystem::new(vec![vec![0]]).unwrap();
        assert_eq!(s.eval(&[0.3])[0], C64::new(1.0, 0.0));
        let s = TrigSystem::new(vec![vec![0], vec![1]]).unwrap();
        let v = s.eval(&[0.5]);
        assert!((v[1] - C64::new(-1.0, 0.0)).norm() < 1e-15);
        assert_eq!(s.len(), 2);
    }

    #[test]
    fn l1_ball_size() {
        assert_eq!(trig_system(MultiIndexSet::l1_ball(2, 4).unwrap()).len(), 41);
    }

    #[test]
    fn phase_is_exact_for_large_frequencies() {
        // 41_000_000 * 0.1 has an exact phase of 0 mod 1; naive products
        // would still be fine here, so also check a value where the
        // rounding error of the product matters.
        assert!(trig_phase(&[41_000_000], &[0.1]).abs() < 1e-8);
        let x = 0.123_456_789_012_345_67_f64;
        let k = 45_000_001_i64;
        let t = trig_phase(&[k], &[x]);
        // Reference in integer-scaled arithmetic: x is a dyadic rational.
        let (mant, exp) = {
            let bits = x.to_bits();
            let e = ((bits >> 52) & 0x7ff) as i32 - 1075;
            ((bits & ((1 << 52) - 1)) | (1 << 52), e)
        };
        let num = (mant as i128) * (k as i128);
        let den = 1_i128 << (-exp);
        let r = num.rem_euclid(den) as f64 / den as f64;
        let expected = r - r.round();
        assert!((t - expected).abs() < 1e-15, "{t} vs {expected}");
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let s = trig_system(MultiIndexSet::l1_ball(2, 3).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let pts: Vec<Vec<f64>> = (0..100).map(|_| vec![rng.random(), rng.random()]).collect();
        assert!(jacobian_fd_error(&s, &pts, 1e-6) < 1e-6);
    }

    #[test]
    fn monte_carlo_gram_is_identity() {
        let s = trig_system(MultiIndexSet::l1_ball(2, 1).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = s.len();
        let samples = 100_000;
        let mut g = vec![C64::new(0.0, 0.0); n * n];
        for _ in 0..samples {
            let v = s.eval(&[rng.random(), rng.random()]);
            for a in 0..n {
                for b in 0..n {
                    g[a * n + b] += v[a] * v[b].conj();
                }
            }
        }
        for a in 0..n {
            for b in 0..n {
                let est = g[a * n + b] / samples as f64;
                let target = if a == b { 1.0 } else { 0.0 };
                assert!((est - target).norm() < 3.0 / (samples as f64).sqrt());
            }
        }
    }

    #[test]
    fn product_grid_is_exact() {
        let s = TrigSystem::new(vec![vec![0, 0], vec![1, 0], vec![0, 2], vec![-1, 1]]).unwrap();
        let rule = s.product_grid(1).unwrap();
        let n = s.len();
        let mut g = vec![C64::new(0.0, 0.0); n * n];
        for (x, w) in rule.points.iter().zip(&rule.weights) {
            let v = s.eval(x);
            for a in 0..n {
                for b in 0..n {
                    g[a * n + b] += v[a] * v[b].conj() * *w;
                }
            }
        }
        for a in 0..n {
            for b in 0..n {
                let target = if a == b { 1.0 } else { 0.0 };
                assert!((g[a * n + b] - target).norm() < 1e-13);
            }
        }
    }
}
