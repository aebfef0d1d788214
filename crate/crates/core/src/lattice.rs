//! Rank-1 lattices: exact reconstruction checks, exhaustive minimal-size
//! search, and index sets that defeat every small lattice.

use std::collections::{BTreeSet, HashSet};

use num_bigint::BigInt;
use num_integer::Integer;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::design::thread_pool;
use crate::error::{invalid, Error, Result};
use crate::index_set::MultiIndexSet;
use crate::measure::DiscreteMeasure;

/// Points `{(i·z/M) mod 1 : i = 0..M−1}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rank1Lattice {
    pub size: u64,
    pub generator: Vec<i64>,
}

impl Rank1Lattice {
    pub fn new(size: u64, generator: Vec<i64>) -> Result<Self> {
        if size == 0 || generator.is_empty() {
            return Err(invalid("a lattice needs M >= 1 and a nonempty generator"));
        }
        Ok(Rank1Lattice { size, generator })
    }

    pub fn dim(&self) -> usize {
        self.generator.len()
    }

    /// True when `gcd(z₁, …, z_d, M) > 1`, i.e. the points repeat.
    pub fn is_degenerate(&self) -> bool {
        let g = self.generator.iter().fold(self.size as i64, |g, &z| g.gcd(&z));
        g > 1
    }

    /// Equal-weight measure on the lattice points; coordinates are exact
    /// ratios of integers reduced modulo `M`.
    pub fn measure(&self) -> DiscreteMeasure {
        let m = self.size as i128;
        let points = (0..m)
            .map(|i| self.generator.iter().map(|&z| ((i * z as i128).rem_euclid(m)) as f64 / m as f64).collect())
            .collect();
        DiscreteMeasure::uniform(points)
    }
}

/// Whether the lattice reproduces `∫|f|² = (1/M) Σ |f(xᵢ)|²` on `V(I)`:
/// all `⟨k, z⟩ mod M` are distinct over `k ∈ I`. Exact in 128-bit integers.
pub fn reconstructs(lattice: &Rank1Lattice, index_set: &MultiIndexSet) -> bool {
    if index_set.dim() != lattice.dim() {
        return false;
    }
    let m = lattice.size as i128;
    let mut seen = HashSet::with_capacity(index_set.len());
    index_set.iter().all(|k| seen.insert(residue(k, &lattice.generator, m)))
}

fn residue(k: &[i64], z: &[i64], m: i128) -> i128 {
    k.iter().zip(z).fold(0i128, |acc, (&a, &b)| (acc + (a as i128).rem_euclid(m) * (b as i128).rem_euclid(m)).rem_euclid(m))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum LatticeSearch {
    Found { size: u64, generator: Vec<i64> },
    /// No size up to `max_size` works.
    NotFound { max_size: u64 },
    /// The evaluation budget ran out after fully scanning sizes below `next_size`.
    Partial { scanned_below: u64, next_size: u64 },
}

/// Smallest `M ≤ max_size` with some `z ∈ {0,…,M−1}^d` that reconstructs
/// `V(I)`, scanning `M` upward and `z` lexicographically. `budget` caps the
/// number of generator candidates examined.
pub fn minimal_lattice_size(index_set: &MultiIndexSet, max_size: u64, budget: Option<u64>) -> LatticeSearch {
    let d = index_set.dim() as u32;
    let start = (index_set.len() as u64).max(1);
    let mut spent: u64 = 0;
    for m in start..=max_size {
        let count = match m.checked_pow(d) {
            Some(c) => c,
            None => return LatticeSearch::Partial { scanned_below: m, next_size: m },
        };
        if let Some(b) = budget {
            if spent.saturating_add(count) > b {
                return LatticeSearch::Partial { scanned_below: m, next_size: m };
            }
        }
        spent += count;
        // Residues of every frequency component modulo M, computed once.
        let reduced: Vec<Vec<i64>> =
            index_set.iter().map(|k| k.iter().map(|&c| c.rem_euclid(m as i64)).collect()).collect();
        let reduced = MultiIndexSet::from_dedup(reduced).ok();
        let found = thread_pool().install(|| {
            (0..count).into_par_iter().find_first(|&code| {
                let z = decode(code, m, d as usize);
                let lattice = Rank1Lattice { size: m, generator: z };
                // Distinct residues require distinct reduced frequencies.
                match &reduced {
                    Some(r) if r.len() == index_set.len() => reconstructs(&lattice, r),
                    _ => false,
                }
            })
        });
        if let Some(code) = found {
            return LatticeSearch::Found { size: m, generator: decode(code, m, d as usize) };
        }
    }
    LatticeSearch::NotFound { max_size }
}

/// Lexicographic decoding of `code` into `{0,…,M−1}^d`, first coordinate most significant.
fn decode(mut code: u64, m: u64, d: usize) -> Vec<i64> {
    let mut z = vec![0i64; d];
    for j in (0..d).rev() {
        z[j] = (code % m) as i64;
        code /= m;
    }
    z
}

/// Whether every lattice with at most `max_size` points fails on `I`.
pub fn refutes_all_lattices(index_set: &MultiIndexSet, max_size: u64) -> bool {
    let d = index_set.dim();
    (1..=max_size).all(|m| {
        let count = m.pow(d as u32);
        (0..count).all(|code| !reconstructs(&Rank1Lattice { size: m, generator: decode(code, m, d) }, index_set))
    })
}

/// `M!` when it fits in `i64`.
pub fn factorial_i64(m: u64) -> Option<i64> {
    (1..=m as i64).try_fold(1i64, |acc, k| acc.checked_mul(k))
}

/// `I_{a,b} = {a, a + M!·b}`: `e_a − e_{a'}` vanishes on every rational
/// point with denominators at most `M`, so no lattice of size `≤ M` can
/// reconstruct `V(I_{a,b})`.
pub fn fooling_index_set(a: &[i64], b: &[i64], m: u64) -> Result<MultiIndexSet> {
    check_fooling_args(a, b, m)?;
    let f = factorial_i64(m).ok_or(Error::BigIntRequired { m })?;
    let shifted = a
        .iter()
        .zip(b)
        .map(|(&ai, &bi)| bi.checked_mul(f).and_then(|v| v.checked_add(ai)))
        .collect::<Option<Vec<i64>>>()
        .ok_or(Error::BigIntRequired { m })?;
    MultiIndexSet::new(vec![a.to_vec(), shifted])
}

/// Arbitrary-precision variant of [`fooling_index_set`]; returns `[a, a']`.
pub fn fooling_index_set_big(a: &[i64], b: &[i64], m: u64) -> Result<[Vec<BigInt>; 2]> {
    check_fooling_args(a, b, m)?;
    let f: BigInt = (1..=m).map(BigInt::from).product();
    let first: Vec<BigInt> = a.iter().map(|&v| BigInt::from(v)).collect();
    let second = a.iter().zip(b).map(|(&ai, &bi)| BigInt::from(ai) + &f * BigInt::from(bi)).collect();
    Ok([first, second])
}

fn check_fooling_args(a: &[i64], b: &[i64], m: u64) -> Result<()> {
    if a.is_empty() || a.len() != b.len() {
        return Err(invalid("a and b must be nonempty vectors of equal length"));
    }
    if b.iter().all(|&v| v == 0) {
        return Err(invalid("b must be nonzero"));
    }
    if m == 0 {
        return Err(invalid("M must be at least 1"));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FoolingReport {
    /// `max |e_a(x) − e_{a'}(x)|` over the grid.
    pub max_abs: f64,
    pub grid_points: usize,
    /// `∫|e_a − e_{a'}|² = 2` for distinct frequencies.
    pub l2_norm_sq: f64,
}

/// Distinct rationals `l/K ∈ [0, 1)` with `K ≤ M`, as reduced pairs `(l, K)`.
pub fn rational_grid_axis(m: u64) -> Vec<(u64, u64)> {
    let mut set = BTreeSet::new();
    for k in 1..=m.max(1) {
        for l in 0..k {
            let g = l.gcd(&k);
            set.insert((l / g, k / g));
        }
    }
    set.into_iter().collect()
}

/// Evaluates `e_a − e_{a'}` on `R^{M,d}`, reducing each phase `⟨k, x⟩` as an
/// exact rational before the exponential.
pub fn verify_fooling(pair: &[Vec<BigInt>; 2], m: u64) -> Result<FoolingReport> {
    let d = pair[0].len();
    if pair[1].len() != d {
        return Err(invalid("frequency vectors differ in dimension"));
    }
    let axis = rational_grid_axis(m);
    let total = axis.len().checked_pow(d as u32).ok_or_else(|| invalid("grid too large"))?;
    let mut max_abs: f64 = 0.0;
    let mut idx = vec![0usize; d];
    for _ in 0..total {
        let x: Vec<(u64, u64)> = idx.iter().map(|&i| axis[i]).collect();
        let pa = exact_phase(&pair[0], &x);
        let pb = exact_phase(&pair[1], &x);
        let (ta, tb) = (std::f64::consts::TAU * pa, std::f64::consts::TAU * pb);
        let diff = num_complex::Complex::new(ta.cos() - tb.cos(), ta.sin() - tb.sin());
        max_abs = max_abs.max(diff.norm());
        for j in (0..d).rev() {
            idx[j] += 1;
            if idx[j] < axis.len() {
                break;
            }
            idx[j] = 0;
        }
    }
    let l2_norm_sq = if pair[0] == pair[1] { 0.0 } else { 2.0 };
    Ok(FoolingReport { max_abs, grid_points: total, l2_norm_sq })
}

/// `⟨k, x⟩ mod 1` for `x_j = l_j / K_j`, as a fraction in `[0, 1)`.
fn exact_phase(k: &[BigInt], x: &[(u64, u64)]) -> f64 {
    let mut num = BigInt::from(0);
    let mut den = BigInt::from(1);
    for (kj, &(l, q)) in k.iter().zip(x) {
        let q = BigInt::from(q);
        let term = (kj * BigInt::from(l)).mod_floor(&q);
        num = num * &q + term * &den;
        den *= q;
        num = num.mod_floor(&den);
    }
    let g = num.gcd(&den);
    let (num, den) = if g > BigInt::from(1) { (num / &g, den / g) } else { (num, den) };
    let to_f = |v: &BigInt| v.to_string().parse::<f64>().unwrap_or(f64::NAN);
    to_f(&num) / to_f(&den)
}

/// Converts a machine-integer set into the big-integer pair form.
pub fn as_big_pair(set: &MultiIndexSet) -> Result<[Vec<BigInt>; 2]> {
    if set.len() != 2 {
        return Err(invalid("a fooling set has exactly two frequencies"));
    }
    let big = |k: &[i64]| k.iter().map(|&v| BigInt::from(v)).collect::<Vec<_>>();
    Ok([big(&set.indices()[0]), big(&set.indices()[1])])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trivial_sets() {
        let zero = MultiIndexSet::new(vec![vec![0]]).unwrap();
        assert!(reconstructs(&Rank1Lattice::new(1, vec![0]).unwrap(), &zero));
        let cube = MultiIndexSet::new((0..4).map(|k| vec![k]).collect()).unwrap();
        assert_eq!(minimal_lattice_size(&cube, 10, None), LatticeSearch::Found { size: 4, generator: vec![1] });
    }

    #[test]
    fn fooling_examples() {
        let s = fooling_index_set(&[0], &[1], 3).unwrap();
        assert_eq!(s.indices(), &[vec![0], vec![6]]);
        let s2 = fooling_index_set(&[0, 0], &[1, 1], 4).unwrap();
        assert_eq!(s2.indices(), &[vec![0, 0], vec![24, 24]]);
        assert!(refutes_all_lattices(&s2, 4));
        let r = verify_fooling(&as_big_pair(&s).unwrap(), 3).unwrap();
        assert_eq!(r.grid_points, 4);
        assert!(r.max_abs < 1e-12);
        assert_eq!(r.l2_norm_sq, 2.0);
    }

    #[test]
    fn overflow_needs_big_integers() {
        assert!(factorial_i64(20).is_some());
        assert!(matches!(fooling_index_set(&[0], &[1], 21), Err(Error::BigIntRequired { m: 21 })));
        let big = fooling_index_set_big(&[0], &[1], 25).unwrap();
        assert_eq!(big[1][0].to_string(), "15511210043330985984000000");
        assert!(verify_fooling(&big, 25).unwrap().max_abs < 1e-9);
    }

    #[test]
    fn grid_axis_counts() {
        // {0, 1/2, 1/3, 2/3, 1/4, 3/4}
        assert_eq!(rational_grid_axis(4).len(), 6);
        assert_eq!(rational_grid_axis(1), vec![(0, 1)]);
    }

    #[test]
    fn lattice_points_are_exact() {
        let l = Rank1Lattice::new(5, vec![1, 2]).unwrap();
        let m = l.measure();
        assert_eq!(m.points[3], vec![0.6, 0.2]);
        assert!(!l.is_degenerate());
        assert!(Rank1Lattice::new(6, vec![2, 4]).unwrap().is_degenerate());
    }

    #[test]
    fn budget_yields_partial() {
        let i = MultiIndexSet::exp1_bad();
        assert!(matches!(minimal_lattice_size(&i, 200, Some(500)), LatticeSearch::Partial { .. }));
    }
}
