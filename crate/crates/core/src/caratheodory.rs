//! Carathéodory support reduction for nonnegative combinations of rank-one
//! Hermitian atoms `w φ(x)φ(x)*`.
//!
//! Every atom is mapped to a real vector spanning the same space as the
//! Hermitian matrices `φφ*`, and weights are then moved along null
//! directions of the active atoms until one of them vanishes. The output
//! support is always a subset of the input support.

use nalgebra::DMatrix;

use crate::error::{invalid, Error, Result};
use crate::design::gramian;
use crate::linalg::real_null_vector;
use crate::measure::DiscreteMeasure;
use crate::system::{trig_phase, FunctionSystem};

/// Default Gramian preservation tolerance, relative to `1 + ‖A‖_F`.
pub const DEFAULT_TOL: f64 = 1e-10;
/// Relative singular-value threshold below which a direction counts as null.
pub const RANK_TOL: f64 = 1e-10;

/// A measure paired with the real vectorization of its atoms.
#[derive(Debug)]
pub struct AtomizedGramian<'a> {
    system: &'a dyn FunctionSystem,
    measure: DiscreteMeasure,
    /// `N_span × M`, one column per atom.
    vectors: DMatrix<f64>,
    n_span: usize,
}

#[derive(Debug, Clone)]
pub struct Reduction {
    pub measure: DiscreteMeasure,
    /// Indices of the surviving atoms in the input measure.
    pub kept: Vec<usize>,
    pub warnings: Vec<String>,
}

/// Result of [`reduce_moment_vector`].
#[derive(Debug, Clone)]
pub struct MomentReduction {
    pub kept: Vec<usize>,
    pub weights: Vec<f64>,
    pub warnings: Vec<String>,
}

impl<'a> AtomizedGramian<'a> {
    /// Trigonometric systems are vectorized over `D(I)` with one real
    /// coordinate per frequency of `D(I)`; other systems over the real and
    /// imaginary parts of `φφ*`, compressed to their numerical span.
    pub fn new(system: &'a dyn FunctionSystem, measure: DiscreteMeasure) -> Result<Self> {
        if measure.points.len() != measure.weights.len() {
            return Err(invalid("points and weights differ in length"));
        }
        if measure.points.iter().any(|p| p.len() != system.point_dim()) {
            return Err(invalid("point dimension does not match the system"));
        }
        if measure.weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(invalid("weights must be nonnegative"));
        }
        let (vectors, n_span) = match system.frequencies() {
            Some(freqs) => {
                let diffs = freqs.difference_set();
                (trig_vectors(diffs.indices(), &measure.points), diffs.len())
            }
            None => generic_vectors(system, &measure.points),
        };
        Ok(Self { system, measure, vectors, n_span })
    }

    pub fn n_span(&self) -> usize {
        self.n_span
    }

    pub fn measure(&self) -> &DiscreteMeasure {
        &self.measure
    }

    pub fn system(&self) -> &dyn FunctionSystem {
        self.system
    }

    /// Real vectorization, `N_span × M`.
    pub fn vectors(&self) -> &DMatrix<f64> {
        &self.vectors
    }
}

fn trig_vectors(diffs: &[Vec<i64>], points: &[Vec<f64>]) -> DMatrix<f64> {
    // D(I) is symmetric; keep the zero frequency once and one representative
    // per pair ±h, contributing cos and sin rows.
    let positive: Vec<&Vec<i64>> = diffs.iter().filter(|h| h.iter().find(|&&c| c != 0).is_some_and(|&c| c > 0)).collect();
    let rows = 1 + 2 * positive.len();
    let mut v = DMatrix::zeros(rows, points.len());
    for (i, x) in points.iter().enumerate() {
        v[(0, i)] = 1.0;
        for (r, h) in positive.iter().enumerate() {
            let t = std::f64::consts::TAU * trig_phase(h, x);
            v[(1 + 2 * r, i)] = t.cos();
            v[(2 + 2 * r, i)] = t.sin();
        }
    }
    v
}

fn generic_vectors(system: &dyn FunctionSystem, points: &[Vec<f64>]) -> (DMatrix<f64>, usize) {
    let n = system.len();
    let raw_rows = n * n;
    let mut raw = DMatrix::zeros(raw_rows, points.len());
    for (i, x) in points.iter().enumerate() {
        let phi = system.eval(x);
        let mut r = 0;
        for a in 0..n {
            raw[(r, i)] = phi[a].norm_sqr();
            r += 1;
            for b in a + 1..n {
                let z = phi[a] * phi[b].conj();
                raw[(r, i)] = z.re;
                raw[(r + 1, i)] = z.im;
                r += 2;
            }
        }
    }
    if points.is_empty() {
        return (raw, 0);
    }
    // Project onto the numerical column space.
    let svd = raw.clone().svd(true, false);
    let u = svd.u.expect("left singular vectors were requested");
    let top = svd.singular_values.max();
    let keep: Vec<usize> = (0..svd.singular_values.len()).filter(|&k| top > 0.0 && svd.singular_values[k] > RANK_TOL * top).collect();
    let basis = u.select_columns(&keep);
    (basis.transpose() * raw, keep.len())
}

/// Conic reduction to at most `N_span` atoms.
pub fn reduce_conic(input: &AtomizedGramian<'_>, tol: f64) -> Result<Reduction> {
    reduce(input, tol, false)
}

/// Convex reduction to at most `N_span + 1` atoms with weights summing to 1.
pub fn reduce_convex(input: &AtomizedGramian<'_>, tol: f64) -> Result<Reduction> {
    let total = input.measure.total_weight();
    if (total - 1.0).abs() > 1e-12 {
        return Err(invalid(format!("convex reduction needs weights summing to 1, got {total}")));
    }
    reduce(input, tol, true)
}

fn reduce(input: &AtomizedGramian<'_>, tol: f64, convex: bool) -> Result<Reduction> {
    let m = &input.measure;
    let bound = input.n_span + usize::from(convex);
    if m.len() <= bound {
        return Ok(Reduction { measure: m.clone(), kept: (0..m.len()).collect(), warnings: Vec::new() });
    }
    let vectors = if convex { with_ones_row(&input.vectors) } else { input.vectors.clone() };
    let (kept, weights, warnings) = eliminate(&vectors, &m.weights);
    assert!(kept.len() <= bound, "reduction left {} atoms, bound {bound}", kept.len());
    let mut out = m.select(&kept);
    out.weights = weights;
    if convex {
        // Restore the exact unit sum lost to rounding.
        let s = out.total_weight();
        out.weights.iter_mut().for_each(|w| *w /= s);
    }
    let before = gramian(input.system, m)?;
    let after = gramian(input.system, &out)?;
    let drift = (before.matrix() - after.matrix()).norm();
    if drift > tol * (1.0 + before.frobenius_norm()) {
        return Err(Error::ReductionDrift { drift, tol });
    }
    for w in &warnings {
        log::warn!("{w}");
    }
    Ok(Reduction { measure: out, kept, warnings })
}

/// Reduces `Σ wᵢ vᵢ` (columns of `values`, `dim × M`) to at most `dim + 1`
/// atoms with nonnegative weights and the same weight sum.
pub fn reduce_moment_vector(values: &DMatrix<f64>, weights: &[f64], tol: f64) -> Result<MomentReduction> {
    if values.ncols() != weights.len() {
        return Err(invalid("one weight per atom is required"));
    }
    if weights.iter().any(|w| !(*w >= 0.0)) {
        return Err(invalid("weights must be nonnegative"));
    }
    let dim = values.nrows();
    if weights.len() <= dim + 1 {
        return Ok(MomentReduction { kept: (0..weights.len()).collect(), weights: weights.to_vec(), warnings: Vec::new() });
    }
    let augmented = with_ones_row(values);
    let (kept, reduced, warnings) = eliminate(&augmented, weights);
    assert!(kept.len() <= dim + 1);
    let target = values * nalgebra::DVector::from_column_slice(weights);
    let mut got = nalgebra::DVector::zeros(dim);
    for (&i, &w) in kept.iter().zip(&reduced) {
        got += values.column(i) * w;
    }
    let drift = (&target - &got).norm();
    if drift > tol * (1.0 + target.norm()) {
        return Err(Error::ReductionDrift { drift, tol });
    }
    Ok(MomentReduction { kept, weights: reduced, warnings })
}

fn with_ones_row(v: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = v.clone().insert_row(v.nrows(), 1.0);
    out.row_mut(v.nrows()).fill(1.0);
    out
}

/// Sweeps the atoms through a window of at most `rows + 1` columns; any
/// window with more columns than rows has a null vector, along which one
/// weight is driven to zero. Finally removes remaining numerically
/// dependent columns.
fn eliminate(vectors: &DMatrix<f64>, weights: &[f64]) -> (Vec<usize>, Vec<f64>, Vec<String>) {
    let rows = vectors.nrows();
    let mut warnings = Vec::new();
    let mut window: Vec<usize> = Vec::with_capacity(rows + 1);
    let mut w: Vec<f64> = weights.to_vec();

    for i in 0..weights.len() {
        if w[i] <= 0.0 {
            continue;
        }
        window.push(i);
        while window.len() > rows {
            let (c, _, _) = null_direction(vectors, &window);
            step(&mut window, &mut w, &c);
        }
    }
    while window.len() > 1 {
        let (c, smin, smax) = null_direction(vectors, &window);
        let threshold = RANK_TOL * smax;
        if smin > threshold {
            if smin < 10.0 * threshold {
                warnings.push(format!("ambiguous rank decision: singular value {smin:e} near threshold {threshold:e}"));
            }
            break;
        }
        if smin > 0.1 * threshold {
            warnings.push(format!("ambiguous rank decision: singular value {smin:e} near threshold {threshold:e}"));
        }
        step(&mut window, &mut w, &c);
    }
    let kept_w = window.iter().map(|&i| w[i]).collect();
    (window, kept_w, warnings)
}

fn null_direction(vectors: &DMatrix<f64>, window: &[usize]) -> (Vec<f64>, f64, f64) {
    let sub = vectors.select_columns(window);
    let smax = sub.norm().max(f64::MIN_POSITIVE);
    match real_null_vector(&sub) {
        Some((c, smin)) => (c.iter().copied().collect(), smin, smax),
        None => (vec![0.0; window.len()], f64::INFINITY, smax),
    }
}

/// Moves `w` along `−t·c` with the largest `t` keeping all weights
/// nonnegative, then drops the atoms that hit zero.
fn step(window: &mut Vec<usize>, w: &mut [f64], c: &[f64]) {
    let mut c = c.to_vec();
    let max_pos = c.iter().cloned().fold(0.0, f64::max);
    let max_neg = c.iter().cloned().fold(0.0, |a: f64, b| a.max(-b));
    if max_neg > max_pos {
        c.iter_mut().for_each(|v| *v = -*v);
    }
    let mut best = None;
    for (j, &cj) in c.iter().enumerate() {
        if cj > 0.0 {
            let t = w[window[j]] / cj;
            if best.is_none_or(|(_, bt)| t < bt) {
                best = Some((j, t));
            }
        }
    }
    let Some((hit, t)) = best else {
        // A zero vector: drop the last atom, which carries no information.
        window.pop();
        return;
    };
    for (j, &cj) in c.iter().enumerate() {
        let idx = window[j];
        w[idx] = (w[idx] - t * cj).max(0.0);
    }
    w[window[hit]] = 0.0;
    window.retain(|&i| w[i] > 0.0);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::index_set::MultiIndexSet;
    use crate::system::{sphere_system, trig_system};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn gram(system: &dyn FunctionSystem, m: &DiscreteMeasure) -> DMatrix<crate::C64> {
        let mut a = DMatrix::zeros(system.len(), system.len());
        for (x, w) in m.points.iter().zip(&m.weights) {
            let phi = system.eval(x);
            for r in 0..phi.len() {
                for c in 0..phi.len() {
                    a[(r, c)] += phi[r] * phi[c].conj() * *w;
                }
            }
        }
        a
    }

    #[test]
    fn equidistant_two_frequencies() {
        let s = trig_system(MultiIndexSet::new(vec![vec![0], vec![1]]).unwrap());
        let m = DiscreteMeasure::equidistant_grid(1, 8);
        let g = AtomizedGramian::new(&s, m.clone()).unwrap();
        assert_eq!(g.n_span(), 3);
        let r = reduce_conic(&g, DEFAULT_TOL).unwrap();
        assert!(r.measure.len() <= 3);
        assert!((gram(&s, &m) - gram(&s, &r.measure)).norm() < 1e-12);
    }

    #[test]
    fn random_trig_atoms_reduce_to_span() {
        let s = trig_system(MultiIndexSet::new(vec![vec![0, 0], vec![1, 0], vec![0, 2]]).unwrap());
        assert_eq!(s.frequencies().unwrap().difference_set().len(), 7);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let pts: Vec<Vec<f64>> = (0..200).map(|_| vec![rng.random(), rng.random()]).collect();
        let w: Vec<f64> = (0..200).map(|_| rng.random::<f64>()).collect();
        let m = DiscreteMeasure::new(pts, w).unwrap();
        let g = AtomizedGramian::new(&s, m.clone()).unwrap();
        let r = reduce_conic(&g, DEFAULT_TOL).unwrap();
        assert!(r.measure.len() <= 7);
        let a = gram(&s, &m);
        assert!((&a - gram(&s, &r.measure)).norm() <= 1e-10 * (1.0 + a.norm()));
        for (k, &i) in r.kept.iter().enumerate() {
            assert_eq!(r.measure.points[k], m.points[i]);
        }
    }

    #[test]
    fn convex_mode_keeps_unit_sum() {
        let s = trig_system(MultiIndexSet::new(vec![vec![0, 0], vec![1, 0], vec![0, 2]]).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pts: Vec<Vec<f64>> = (0..50).map(|_| vec![rng.random(), rng.random()]).collect();
        let m = DiscreteMeasure::uniform(pts);
        let g = AtomizedGramian::new(&s, m).unwrap();
        let r = reduce_convex(&g, DEFAULT_TOL).unwrap();
        assert!(r.measure.len() <= 8);
        assert!((r.measure.total_weight() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn generic_span_matches_sphere_dimension() {
        // Products of degree-1 harmonics span the degree-2 polynomials: 9 dims.
        let s = sphere_system(1);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let pts: Vec<Vec<f64>> = (0..60).map(|_| s.sample_point(&mut rng)).collect();
        let m = DiscreteMeasure::uniform(pts);
        let g = AtomizedGramian::new(&s, m.clone()).unwrap();
        assert_eq!(g.n_span(), 9);
        let r = reduce_conic(&g, DEFAULT_TOL).unwrap();
        assert!(r.measure.len() <= 9);
        let a = gram(&s, &m);
        assert!((&a - gram(&s, &r.measure)).norm() <= 1e-10 * (1.0 + a.norm()));
    }

    #[test]
    fn small_inputs_are_untouched() {
        let s = trig_system(MultiIndexSet::new(vec![vec![0], vec![1]]).unwrap());
        let m = DiscreteMeasure::new(vec![vec![0.3]], vec![1.0]).unwrap();
        let g = AtomizedGramian::new(&s, m.clone()).unwrap();
        let r = reduce_convex(&g, DEFAULT_TOL).unwrap();
        assert_eq!(r.measure, m);
    }

    #[test]
    fn moment_vector_reduction() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let v = DMatrix::from_fn(4, 100, |_, _| rng.random::<f64>() - 0.5);
        let w = vec![0.01; 100];
        let r = reduce_moment_vector(&v, &w, 1e-12).unwrap();
        assert!(r.kept.len() <= 5);
        let mut sum = nalgebra::DVector::zeros(4);
        for (&i, &wi) in r.kept.iter().zip(&r.weights) {
            sum += v.column(i) * wi;
        }
        let target = &v * nalgebra::DVector::from_element(100, 0.01);
        assert!((sum - target).norm() < 1e-12);
        assert!((r.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_negative_weights() {
        let s = trig_system(MultiIndexSet::new(vec![vec![0]]).unwrap());
        let m = DiscreteMeasure { points: vec![vec![0.0]], weights: vec![-1.0] };
        assert!(AtomizedGramian::new(&s, m).is_err());
    }
}
