//! Gramians, design objectives and their optimizers.

use nalgebra::{Cholesky, DMatrix};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::linalg::{HermitianMatrix, C64};
use crate::measure::DiscreteMeasure;
use crate::system::FunctionSystem;

pub mod bfgs;
mod frobenius;
mod logdet;

pub use frobenius::optimize_frobenius;
pub use logdet::{optimize_logdet, weight_newton, LogdetConfig};

/// Default success threshold on `ε`.
pub const DEFAULT_EPS_TARGET: f64 = 1e-13;
/// Iterations per alternation block.
pub const BLOCK_ITERS: usize = 30;
/// Outer loop stops once the relative improvement of a full block drops below this.
pub const RELATIVE_IMPROVEMENT_TOL: f64 = 1e-16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum WeightMode {
    /// `wᵢ = 1/N`, weights never optimized.
    Equal,
    #[default]
    Free,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Normalization {
    /// Weights clamped to `≥ 0` and rescaled to sum 1.
    #[default]
    Probability,
    /// Weights only clamped to `≥ 0`.
    Conic,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub max_restarts: usize,
    /// Cap on BFGS iterations per restart, summed over all blocks.
    pub max_iters: usize,
    pub seed: u64,
    pub weight_mode: WeightMode,
    pub normalization: Normalization,
    pub eps_target: f64,
    /// Stop launching restarts once one succeeds. Restarts are processed in
    /// fixed chunks, so the result does not depend on the thread count.
    pub stop_on_success: bool,
    /// Start for restart 0 instead of a random draw.
    #[serde(skip)]
    pub initial: Option<DiscreteMeasure>,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            max_restarts: 10,
            max_iters: 5000,
            seed: 0,
            weight_mode: WeightMode::Free,
            normalization: Normalization::Probability,
            eps_target: DEFAULT_EPS_TARGET,
            stop_on_success: true,
            initial: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DesignResult {
    pub measure: DiscreteMeasure,
    /// `‖A − I‖₂→₂` recomputed on the returned measure.
    pub mz_constant: f64,
    /// `‖A − I‖_F` on the returned measure.
    pub frobenius_residual: f64,
    /// `log det A`, when the design came from the determinant objective.
    pub log_det: Option<f64>,
    pub exact: bool,
    /// BFGS iterations of the selected restart.
    pub iterations: usize,
    pub restarts_used: usize,
    pub best_restart: usize,
    pub seed: u64,
    /// Objective value after each block of the selected restart.
    pub objective_trace: Vec<f64>,
}

/// Gradient with respect to point coordinates and weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub points: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

/// Basis values (`n × N`, one column per atom) and, optionally, Jacobians
/// (`n·d` entries per atom, row-major as in [`FunctionSystem::jacobian_into`]).
pub(crate) struct Evaluation {
    pub values: DMatrix<C64>,
    pub jacobians: Vec<Vec<C64>>,
}

pub(crate) fn evaluate(system: &dyn FunctionSystem, points: &[Vec<f64>], with_jacobian: bool) -> Evaluation {
    let n = system.len();
    let d = system.point_dim();
    let mut values = DMatrix::zeros(n, points.len());
    let mut jacobians = Vec::with_capacity(if with_jacobian { points.len() } else { 0 });
    let mut buf = vec![C64::new(0.0, 0.0); n];
    for (i, x) in points.iter().enumerate() {
        if with_jacobian {
            let mut jac = vec![C64::new(0.0, 0.0); n * d];
            system.jacobian_into(x, &mut buf, &mut jac);
            jacobians.push(jac);
        } else {
            system.eval_into(x, &mut buf);
        }
        values.column_mut(i).copy_from_slice(&buf);
    }
    Evaluation { values, jacobians }
}

/// `Σ wᵢ φᵢ φᵢ*` from precomputed columns, without symmetrization.
pub(crate) fn weighted_gram(values: &DMatrix<C64>, weights: &[f64]) -> DMatrix<C64> {
    let mut scaled = values.clone();
    for (mut col, w) in scaled.column_iter_mut().zip(weights) {
        col *= C64::new(w.max(0.0).sqrt(), 0.0);
    }
    let mut a = &scaled * scaled.adjoint();
    // Negative weights cannot go through the square root.
    for (i, w) in weights.iter().enumerate() {
        if *w < 0.0 {
            let c = values.column(i);
            a += (&c * c.adjoint()) * C64::new(*w, 0.0);
        }
    }
    a
}

fn check_measure(system: &dyn FunctionSystem, measure: &DiscreteMeasure) -> Result<()> {
    if measure.points.len() != measure.weights.len() {
        return Err(invalid("points and weights differ in length"));
    }
    let d = system.point_dim();
    if let Some(p) = measure.points.iter().find(|p| p.len() != d) {
        return Err(invalid(format!("point {p:?} does not have {d} coordinates")));
    }
    Ok(())
}

/// `A = Σ wᵢ φ(xᵢ) φ(xᵢ)*`.
pub fn gramian(system: &dyn FunctionSystem, measure: &DiscreteMeasure) -> Result<HermitianMatrix> {
    check_measure(system, measure)?;
    let ev = evaluate(system, &measure.points, false);
    Ok(HermitianMatrix::symmetrized(weighted_gram(&ev.values, &measure.weights)))
}

/// `‖A − I‖₂→₂`.
pub fn mz_constant(system: &dyn FunctionSystem, measure: &DiscreteMeasure) -> Result<f64> {
    gramian(system, measure)?.spectral_distance_to_identity()
}

/// `‖A − I‖_F²`.
pub fn frobenius_objective(system: &dyn FunctionSystem, measure: &DiscreteMeasure) -> Result<f64> {
    Ok(gramian(system, measure)?.frobenius_distance_to_identity_sq())
}

/// Objective and gradient from precomputed evaluations.
///
/// `∂f/∂x_{ij} = 4 wᵢ Re(φᵢ* R ∂ⱼφᵢ)`, `∂f/∂wᵢ = 2 Re(φᵢ* R φᵢ)` with `R = A − I`.
pub(crate) fn frobenius_parts(ev: &Evaluation, weights: &[f64], d: usize, want_points: bool) -> (f64, Vec<Vec<f64>>, Vec<f64>) {
    let n = ev.values.nrows();
    let mut r = weighted_gram(&ev.values, weights);
    for k in 0..n {
        r[(k, k)] -= C64::new(1.0, 0.0);
    }
    let f = r.iter().map(|z| z.norm_sqr()).sum();
    let u = &r * &ev.values;
    let mut wg = Vec::with_capacity(weights.len());
    let mut pg = Vec::with_capacity(if want_points { weights.len() } else { 0 });
    for (i, w) in weights.iter().enumerate() {
        let ui = u.column(i);
        let phi = ev.values.column(i);
        wg.push(2.0 * phi.iter().zip(ui.iter()).map(|(a, b)| (a.conj() * b).re).sum::<f64>());
        if want_points {
            let jac = &ev.jacobians[i];
            let mut g = vec![0.0; d];
            for (k, uk) in ui.iter().enumerate() {
                let uc = uk.conj();
                for (j, gj) in g.iter_mut().enumerate() {
                    *gj += (uc * jac[k * d + j]).re;
                }
            }
            g.iter_mut().for_each(|v| *v *= 4.0 * w);
            pg.push(g);
        }
    }
    (f, pg, wg)
}

pub fn frobenius_gradient(system: &dyn FunctionSystem, measure: &DiscreteMeasure) -> Result<Gradient> {
    check_measure(system, measure)?;
    if !system.has_jacobian() {
        return Err(invalid("system provides no Jacobian"));
    }
    let ev = evaluate(system, &measure.points, true);
    let (_, points, weights) = frobenius_parts(&ev, &measure.weights, system.point_dim(), true);
    Ok(Gradient { points, weights })
}

/// `log det A` with gradient, via Cholesky. Returns `(−∞, zeros)` when `A`
/// is not numerically positive definite.
pub(crate) fn logdet_parts(ev: &Evaluation, weights: &[f64], d: usize, want_points: bool) -> (f64, Vec<Vec<f64>>, Vec<f64>) {
    let a = weighted_gram(&ev.values, weights);
    let a = HermitianMatrix::symmetrized(a).into_inner();
    let zeros = || {
        (
            f64::NEG_INFINITY,
            if want_points { vec![vec![0.0; d]; weights.len()] } else { Vec::new() },
            vec![0.0; weights.len()],
        )
    };
    let Some(chol) = Cholesky::new(a) else {
        return zeros();
    };
    let l = chol.l_dirty();
    let mut value = 0.0;
    for k in 0..l.nrows() {
        let lk = l[(k, k)].re;
        if !(lk > 0.0) {
            return zeros();
        }
        value += 2.0 * lk.ln();
    }
    let v = chol.solve(&ev.values);
    let mut wg = Vec::with_capacity(weights.len());
    let mut pg = Vec::new();
    for (i, w) in weights.iter().enumerate() {
        let vi = v.column(i);
        let phi = ev.values.column(i);
        wg.push(phi.iter().zip(vi.iter()).map(|(a, b)| (a.conj() * b).re).sum());
        if want_points {
            let jac = &ev.jacobians[i];
            let mut g = vec![0.0; d];
            for (k, vk) in vi.iter().enumerate() {
                let vc = vk.conj();
                for (j, gj) in g.iter_mut().enumerate() {
                    *gj += (vc * jac[k * d + j]).re;
                }
            }
            g.iter_mut().for_each(|x| *x *= 2.0 * w);
            pg.push(g);
        }
    }
    (value, pg, wg)
}

/// `log det A` and its gradient: `∂/∂wᵢ = Re(φᵢ* A⁻¹ φᵢ)`,
/// `∂/∂x_{ij} = 2 wᵢ Re(φᵢ* A⁻¹ ∂ⱼφᵢ)`.
pub fn logdet_objective_and_gradient(system: &dyn FunctionSystem, measure: &DiscreteMeasure) -> Result<(f64, Gradient)> {
    check_measure(system, measure)?;
    let ev = evaluate(system, &measure.points, system.has_jacobian());
    let (value, points, weights) = logdet_parts(&ev, &measure.weights, system.point_dim(), system.has_jacobian());
    Ok((value, Gradient { points, weights }))
}

/// SplitMix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of restart `index` under master seed `master`.
pub fn restart_seed(master: u64, index: usize) -> u64 {
    splitmix64(splitmix64(master) ^ (index as u64).wrapping_mul(0xD1B5_4A32_D192_ED03))
}

/// Restarts launched per chunk when stopping on success.
pub const RESTART_CHUNK: usize = 8;

/// Worker pool honoring `MZFORGE_THREADS`.
pub fn thread_pool() -> &'static rayon::ThreadPool {
    static POOL: std::sync::OnceLock<rayon::ThreadPool> = std::sync::OnceLock::new();
    POOL.get_or_init(|| {
        let threads = std::env::var("MZFORGE_THREADS").ok().and_then(|v| v.parse::<usize>().ok()).unwrap_or(0);
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .expect("thread pool construction")
    })
}

/// Runs `run(i)` for restart indices in fixed-size chunks on the pool and
/// returns all completed results in index order. With `stop`, no further
/// chunk is started once any result satisfies `done`.
pub(crate) fn run_restarts<T: Send>(
    count: usize,
    stop: bool,
    run: impl Fn(usize) -> Option<T> + Sync,
    done: impl Fn(&T) -> bool,
) -> Vec<(usize, T)> {
    use rayon::prelude::*;
    let mut out = Vec::new();
    let chunk = if stop { RESTART_CHUNK } else { count.max(1) };
    let mut start = 0;
    while start < count {
        let end = (start + chunk).min(count);
        let batch: Vec<(usize, Option<T>)> =
            thread_pool().install(|| (start..end).into_par_iter().map(|i| (i, run(i))).collect());
        let mut finished = false;
        for (i, r) in batch {
            if let Some(r) = r {
                finished |= done(&r);
                out.push((i, r));
            }
        }
        start = end;
        if stop && finished {
            break;
        }
    }
    out
}

/// Clamps and (optionally) renormalizes weights, canonicalizes points and
/// recomputes all diagnostics from scratch.
pub(crate) fn finalize(
    system: &dyn FunctionSystem,
    mut measure: DiscreteMeasure,
    normalization: Normalization,
) -> Result<(DiscreteMeasure, f64, f64)> {
    measure.canonicalize(system.domain());
    match normalization {
        Normalization::Probability => measure.normalize_probability(),
        Normalization::Conic => measure.weights.iter_mut().for_each(|w| *w = w.max(0.0)),
    }
    let a = gramian(system, &measure)?;
    let eps = a.spectral_distance_to_identity()?;
    let frob = a.frobenius_distance_to_identity_sq().sqrt();
    Ok((measure, eps, frob))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::index_set::MultiIndexSet;
    use crate::measure::Domain;
    use crate::system::{christoffel_rescale, sphere_system, trig_system, TrigSystem};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn random_measure(domain: Domain, count: usize, rng: &mut ChaCha8Rng) -> DiscreteMeasure {
        let points = (0..count).map(|_| domain.sample(rng)).collect();
        let weights = (0..count).map(|_| rng.random::<f64>() / count as f64 * 2.0).collect();
        DiscreteMeasure { points, weights }
    }

    #[test]
    fn gramian_hand_values() {
        let s = TrigSystem::new(vec![vec![0], vec![1]]).unwrap();
        let m = DiscreteMeasure::new(vec![vec![0.0]], vec![1.0]).unwrap();
        let a = gramian(&s, &m).unwrap();
        for z in a.matrix().iter() {
            assert!((z - C64::new(1.0, 0.0)).norm() < 1e-15);
        }
        assert!((frobenius_objective(&s, &m).unwrap() - 2.0).abs() < 1e-14);
        let zero = DiscreteMeasure::new(vec![vec![0.3]], vec![0.0]).unwrap();
        assert_eq!(gramian(&s, &zero).unwrap().frobenius_norm(), 0.0);
    }

    #[test]
    fn equidistant_grid_is_exact() {
        let s = trig_system(MultiIndexSet::cube(1, 4).unwrap());
        let g = DiscreteMeasure::equidistant_grid(1, 8);
        assert!(mz_constant(&s, &g).unwrap() < 1e-13);
        assert!(frobenius_objective(&s, &g).unwrap() < 1e-26);
        let grad = frobenius_gradient(&s, &g).unwrap();
        assert!(grad.weights.iter().all(|v| v.abs() < 1e-12));
        assert!(grad.points.iter().flatten().all(|v| v.abs() < 1e-12));
    }

    fn fd_check(system: &dyn FunctionSystem, measure: &DiscreteMeasure, logdet: bool) -> f64 {
        let h = 1e-6;
        let obj = |m: &DiscreteMeasure| {
            if logdet {
                logdet_objective_and_gradient(system, m).unwrap().0
            } else {
                frobenius_objective(system, m).unwrap()
            }
        };
        let grad = if logdet {
            logdet_objective_and_gradient(system, measure).unwrap().1
        } else {
            frobenius_gradient(system, measure).unwrap()
        };
        let scale = grad.points.iter().flatten().chain(&grad.weights).fold(1e-3, |a: f64, b| a.max(b.abs()));
        let mut worst: f64 = 0.0;
        for i in 0..measure.len() {
            for j in 0..measure.point_dim() {
                let mut p = measure.clone();
                let mut q = measure.clone();
                p.points[i][j] += h;
                q.points[i][j] -= h;
                let fd = (obj(&p) - obj(&q)) / (2.0 * h);
                worst = worst.max((fd - grad.points[i][j]).abs() / scale);
            }
            let mut p = measure.clone();
            let mut q = measure.clone();
            p.weights[i] += h;
            q.weights[i] -= h;
            let fd = (obj(&p) - obj(&q)) / (2.0 * h);
            worst = worst.max((fd - grad.weights[i]).abs() / scale);
        }
        worst
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let trig = trig_system(MultiIndexSet::l1_ball(2, 2).unwrap());
        let sph = sphere_system(2);
        for _ in 0..5 {
            let m = random_measure(trig.domain(), 15, &mut rng);
            assert!(fd_check(&trig, &m, false) < 1e-5);
            assert!(fd_check(&trig, &m, true) < 1e-5);
            let m = random_measure(Domain::Sphere, 12, &mut rng);
            assert!(fd_check(&sph, &m, false) < 1e-5);
            assert!(fd_check(&sph, &m, true) < 1e-5);
        }
    }

    #[test]
    fn weight_gradient_linearization() {
        // At A = I + E the weight gradient is 2 Re(φ* E φ).
        let s = trig_system(MultiIndexSet::cube(1, 2).unwrap());
        let mut m = DiscreteMeasure::equidistant_grid(1, 4);
        m.weights[0] += 1e-3;
        let g = frobenius_gradient(&s, &m).unwrap();
        let phi0 = s.eval(&m.points[0]);
        for (i, x) in m.points.iter().enumerate() {
            let phi = s.eval(x);
            let e: C64 = phi.iter().zip(&phi0).map(|(a, b)| a.conj() * b).sum();
            let expected = 2.0 * 1e-3 * e.norm_sqr();
            assert!((g.weights[i] - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn logdet_properties() {
        let base: crate::system::SharedSystem = Arc::new(TrigSystem::new(vec![vec![-1], vec![0], vec![1]]).unwrap());
        let r = christoffel_rescale(base, true);
        let g = DiscreteMeasure::equidistant_grid(1, 3);
        let (v, grad) = logdet_objective_and_gradient(&r, &g).unwrap();
        assert!(v.abs() < 1e-14);
        for w in grad.weights {
            assert!((w - 3.0).abs() < 1e-12);
        }
        let single = DiscreteMeasure::new(vec![vec![0.1]], vec![1.0]).unwrap();
        let (v, grad) = logdet_objective_and_gradient(&r, &single).unwrap();
        assert_eq!(v, f64::NEG_INFINITY);
        assert!(grad.weights.iter().all(|w| *w == 0.0));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let mut m = random_measure(r.domain(), 6, &mut rng);
            m.normalize_probability();
            assert!(logdet_objective_and_gradient(&r, &m).unwrap().0 <= 1e-10);
        }
    }

    #[test]
    fn restart_seeds_are_distinct() {
        let seeds: std::collections::HashSet<u64> = (0..1000).map(|i| restart_seed(42, i)).collect();
        assert_eq!(seeds.len(), 1000);
        assert_eq!(restart_seed(42, 3), restart_seed(42, 3));
    }
}
