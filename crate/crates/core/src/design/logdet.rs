use nalgebra::{Cholesky, DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Result};
use crate::linalg::{HermitianMatrix, C64};
use crate::measure::{DiscreteMeasure, Domain};
use crate::system::FunctionSystem;

use super::bfgs::{self, Stop};
use super::frobenius::POLISH_ITERS;
use super::{
    evaluate, logdet_parts, restart_seed, run_restarts, weighted_gram, DesignResult, OptimizerConfig, WeightMode,
    BLOCK_ITERS, RELATIVE_IMPROVEMENT_TOL,
};

/// Atoms with weight at or below this are dropped from the support.
pub const SUPPORT_THRESHOLD: f64 = 1e-14;
/// A determinant within this relative distance of 1 counts as exact.
pub const DET_SUCCESS_TOL: f64 = 1e-12;
/// Relative tolerance on `max dᵢ / n − 1` for weight optimality.
pub const WEIGHT_OPTIMALITY_TOL: f64 = 1e-13;
const MULTIPLICATIVE_WARMUP: usize = 20;
const NEWTON_ITERS: usize = 100;
const EXCHANGE_TOL: f64 = 1e-9;

/// Settings specific to the determinant route.
#[derive(Debug, Clone)]
pub struct LogdetConfig {
    pub optimizer: OptimizerConfig,
    /// Random candidates scanned per exchange step; 0 disables exchanges.
    pub exchange_candidates: usize,
    /// Largest support the exchange step may grow to.
    pub max_atoms: Option<usize>,
}

impl Default for LogdetConfig {
    fn default() -> Self {
        LogdetConfig { optimizer: OptimizerConfig::default(), exchange_candidates: 2048, max_atoms: None }
    }
}

struct Candidate {
    measure: DiscreteMeasure,
    log_det: f64,
    iterations: usize,
    trace: Vec<f64>,
}

/// Maximizes `log det Σ wᵢ φ(xᵢ)φ(xᵢ)*` over points and probability weights.
///
/// Points move by BFGS; weights are solved to optimality on the simplex by
/// a Newton active-set iteration; random exchange steps insert atoms where
/// `φ(x)* A⁻¹ φ(x)` exceeds `n`.
pub fn optimize_logdet(system: &dyn FunctionSystem, n_points: usize, config: &LogdetConfig) -> Result<DesignResult> {
    let opt = &config.optimizer;
    if n_points < system.len() {
        return Err(invalid(format!(
            "{n_points} points cannot give a nonsingular {}x{} Gramian",
            system.len(),
            system.len()
        )));
    }
    if !system.has_jacobian() {
        return Err(invalid("optimization requires a system with a Jacobian"));
    }
    let success = (1.0 - DET_SUCCESS_TOL).ln();
    let runs = run_restarts(
        opt.max_restarts.max(1),
        opt.stop_on_success,
        |i| {
            let out = run_restart(system, n_points, config, i);
            if out.is_none() {
                log::warn!("restart {i} abandoned: singular start or non-finite objective");
            }
            out
        },
        |c: &Candidate| c.log_det >= success,
    );
    let restarts_used = runs.len();
    let (best_restart, best) = runs
        .into_iter()
        .min_by(|(ia, a), (ib, b)| b.log_det.total_cmp(&a.log_det).then(ia.cmp(ib)))
        .ok_or_else(|| invalid("no restart produced a nonsingular design"))?;
    let a = super::gramian(system, &best.measure)?;
    let eps = a.spectral_distance_to_identity()?;
    let frob = a.frobenius_distance_to_identity_sq().sqrt();
    Ok(DesignResult {
        measure: best.measure,
        mz_constant: eps,
        frobenius_residual: frob,
        log_det: Some(best.log_det),
        exact: best.log_det >= success,
        iterations: best.iterations,
        restarts_used,
        best_restart,
        seed: opt.seed,
        objective_trace: best.trace,
    })
}

fn run_restart(system: &dyn FunctionSystem, n_points: usize, config: &LogdetConfig, index: usize) -> Option<Candidate> {
    let opt = &config.optimizer;
    let n = system.len();
    let domain = system.domain();
    let mut rng = ChaCha8Rng::seed_from_u64(restart_seed(opt.seed, index));
    let mut measure = match (&opt.initial, index) {
        (Some(init), 0) => init.clone(),
        _ => DiscreteMeasure::uniform((0..n_points).map(|_| system.sample_point(&mut rng)).collect()),
    };
    let scales = system.coordinate_scales();
    let free = opt.weight_mode == WeightMode::Free;
    let max_atoms = config.max_atoms.unwrap_or(n * n + n).max(n_points);

    let mut iterations = 0;
    let mut trace = Vec::new();
    let mut value = current_log_det(system, &measure);
    if !value.is_finite() {
        return None;
    }
    if free {
        value = weight_newton(&evaluate(system, &measure.points, false).values, &mut measure.weights);
    }
    while iterations < opt.max_iters {
        let before = value;
        let budget = BLOCK_ITERS.min(opt.max_iters - iterations);
        let out = point_phase(system, &mut measure, &scales, budget)?;
        iterations += out.iterations;
        value = -out.value;
        if domain == Domain::Sphere {
            measure.canonicalize(domain);
        }
        let mut inserted = false;
        if free {
            value = weight_newton(&evaluate(system, &measure.points, false).values, &mut measure.weights);
            if config.exchange_candidates > 0 && exchange(system, &mut measure, config.exchange_candidates, max_atoms, &mut rng) {
                inserted = true;
                value = weight_newton(&evaluate(system, &measure.points, false).values, &mut measure.weights);
            }
        }
        if !value.is_finite() {
            return None;
        }
        trace.push(value);
        if !inserted && value - before <= RELATIVE_IMPROVEMENT_TOL * before.abs().max(1.0) {
            break;
        }
    }
    let out = point_phase(system, &mut measure, &scales, POLISH_ITERS)?;
    iterations += out.iterations;
    measure.canonicalize(domain);
    if free {
        weight_newton(&evaluate(system, &measure.points, false).values, &mut measure.weights);
    }
    let keep: Vec<usize> = (0..measure.len()).filter(|&i| measure.weights[i] > SUPPORT_THRESHOLD).collect();
    measure = measure.select(&keep);
    measure.normalize_probability();
    let log_det = current_log_det(system, &measure);
    trace.push(log_det);
    log_det.is_finite().then_some(Candidate { measure, log_det, iterations, trace })
}

fn current_log_det(system: &dyn FunctionSystem, measure: &DiscreteMeasure) -> f64 {
    let ev = evaluate(system, &measure.points, false);
    logdet_parts(&ev, &measure.weights, system.point_dim(), false).0
}

fn point_phase(
    system: &dyn FunctionSystem,
    measure: &mut DiscreteMeasure,
    scales: &[f64],
    iters: usize,
) -> Option<bfgs::Outcome> {
    let d = system.point_dim();
    let w = measure.weights.clone();
    let mut y: Vec<f64> = measure.points.iter().flat_map(|p| p.iter().zip(scales).map(|(c, s)| c * s)).collect();
    let out = bfgs::minimize(&mut y, iters, |y, grad| {
        let points: Vec<Vec<f64>> =
            y.chunks(d).map(|c| c.iter().zip(scales).map(|(v, s)| v / s).collect()).collect();
        let ev = evaluate(system, &points, true);
        let (value, pg, _) = logdet_parts(&ev, &w, d, true);
        for (gi, g) in grad.chunks_mut(d).zip(&pg) {
            for j in 0..d {
                gi[j] = -g[j] / scales[j];
            }
        }
        -value
    });
    if out.stop == Stop::NotFinite {
        return None;
    }
    measure.points = y.chunks(d).map(|c| c.iter().zip(scales).map(|(v, s)| v / s).collect()).collect();
    Some(out)
}

/// Moves or adds one atom to the best of `count` random candidates when
/// its leverage `φ(x)* A⁻¹ φ(x)` exceeds `n`. Returns whether it did.
fn exchange(
    system: &dyn FunctionSystem,
    measure: &mut DiscreteMeasure,
    count: usize,
    max_atoms: usize,
    rng: &mut ChaCha8Rng,
) -> bool {
    let n = system.len() as f64;
    let ev = evaluate(system, &measure.points, false);
    let a = HermitianMatrix::symmetrized(weighted_gram(&ev.values, &measure.weights)).into_inner();
    let Some(chol) = Cholesky::new(a) else {
        return false;
    };
    let mut best: Option<(f64, Vec<f64>)> = None;
    for _ in 0..count {
        let x = system.sample_point(rng);
        let phi = DVector::from_vec(system.eval(&x));
        let v = chol.solve(&phi);
        let lev = phi.dotc(&v).re;
        if best.as_ref().is_none_or(|(b, _)| lev > *b) {
            best = Some((lev, x));
        }
    }
    let Some((lev, x)) = best else {
        return false;
    };
    if lev <= n * (1.0 + EXCHANGE_TOL) {
        return false;
    }
    if let Some(i) = measure.weights.iter().position(|w| *w <= SUPPORT_THRESHOLD) {
        measure.points[i] = x;
        measure.weights[i] = 0.0;
    } else if measure.len() < max_atoms {
        measure.points.push(x);
        measure.weights.push(0.0);
    } else {
        let i = (0..measure.len())
            .min_by(|&a, &b| measure.weights[a].total_cmp(&measure.weights[b]))
            .unwrap_or(0);
        measure.points[i] = x;
        measure.weights[i] = 0.0;
        measure.normalize_probability();
    }
    true
}

/// Maximizes `log det Σ wᵢ φᵢφᵢ*` over the probability simplex for fixed
/// columns `φᵢ`, updating `weights` in place. Returns the final log det
/// (`−∞` if the columns do not span).
///
/// A few multiplicative steps `wᵢ ← wᵢ dᵢ/n` are followed by Newton steps on
/// the active set with Hessian `−|φᵢ* A⁻¹ φⱼ|²`.
pub fn weight_newton(values: &DMatrix<C64>, weights: &mut [f64]) -> f64 {
    let n = values.nrows() as f64;
    let total: f64 = weights.iter().map(|w| w.max(0.0)).sum();
    if total <= 0.0 {
        let u = 1.0 / weights.len() as f64;
        weights.iter_mut().for_each(|w| *w = u);
    } else {
        weights.iter_mut().for_each(|w| *w = w.max(0.0) / total);
    }
    // Let every atom take part in the warm-up.
    let floor = 1e-3 / weights.len() as f64;
    weights.iter_mut().for_each(|w| *w = w.max(floor));
    renormalize(weights);

    for _ in 0..MULTIPLICATIVE_WARMUP {
        let Some((_, lev, _)) = leverages(values, weights) else {
            return f64::NEG_INFINITY;
        };
        for (w, d) in weights.iter_mut().zip(&lev) {
            *w *= d / n;
        }
        renormalize(weights);
    }

    let mut value = f64::NEG_INFINITY;
    for _ in 0..NEWTON_ITERS {
        let Some((ld, lev, v)) = leverages(values, weights) else {
            return f64::NEG_INFINITY;
        };
        value = ld;
        // Re-admit inactive atoms that violate optimality.
        let mut readmitted = false;
        for (i, w) in weights.iter_mut().enumerate() {
            if *w <= 0.0 && lev[i] > n * (1.0 + WEIGHT_OPTIMALITY_TOL) {
                *w = 1e-6;
                readmitted = true;
            }
        }
        if readmitted {
            renormalize(weights);
            continue;
        }
        let active: Vec<usize> = (0..weights.len()).filter(|&i| weights[i] > 0.0).collect();
        let worst = active.iter().map(|&i| (lev[i] / n - 1.0).abs()).fold(0.0, f64::max);
        if worst <= WEIGHT_OPTIMALITY_TOL {
            break;
        }
        let m = active.len();
        // KKT system [G 1; 1ᵀ 0][Δ; ν] = [d; 0].
        let mut kkt = DMatrix::<f64>::zeros(m + 1, m + 1);
        let mut rhs = DVector::<f64>::zeros(m + 1);
        for (a, &i) in active.iter().enumerate() {
            for (b, &j) in active.iter().enumerate() {
                let c: C64 = values.column(i).dotc(&v.column(j));
                kkt[(a, b)] = c.norm_sqr();
            }
            kkt[(a, m)] = 1.0;
            kkt[(m, a)] = 1.0;
            rhs[a] = lev[i];
        }
        let svd = kkt.svd(true, true);
        let tol = 1e-13 * svd.singular_values.max();
        let Ok(sol) = svd.solve(&rhs, tol) else {
            break;
        };
        let delta: Vec<f64> = (0..m).map(|a| sol[a]).collect();
        let mut alpha: f64 = 1.0;
        let mut hit = None;
        for (a, &i) in active.iter().enumerate() {
            if delta[a] < 0.0 {
                let lim = -weights[i] / delta[a];
                if lim < alpha {
                    alpha = lim;
                    hit = Some(i);
                }
            }
        }
        let base = weights.to_vec();
        let mut improved = false;
        for _ in 0..40 {
            for (a, &i) in active.iter().enumerate() {
                weights[i] = (base[i] + alpha * delta[a]).max(0.0);
            }
            if let Some(h) = hit {
                weights[h] = 0.0;
            }
            renormalize(weights);
            match leverages(values, weights) {
                Some((ld, _, _)) if ld >= value => {
                    improved = true;
                    break;
                }
                _ => {
                    alpha *= 0.5;
                    hit = None;
                }
            }
        }
        if !improved {
            weights.copy_from_slice(&base);
            break;
        }
    }
    weights.iter_mut().for_each(|w| {
        if *w <= SUPPORT_THRESHOLD {
            *w = 0.0
        }
    });
    renormalize(weights);
    leverages(values, weights).map(|(ld, _, _)| ld).unwrap_or(value)
}

fn renormalize(w: &mut [f64]) {
    let t: f64 = w.iter().sum();
    if t > 0.0 {
        w.iter_mut().for_each(|v| *v /= t);
    }
}

/// `(log det A, dᵢ = φᵢ* A⁻¹ φᵢ, A⁻¹ Φ)`.
fn leverages(values: &DMatrix<C64>, weights: &[f64]) -> Option<(f64, Vec<f64>, DMatrix<C64>)> {
    let a = HermitianMatrix::symmetrized(weighted_gram(values, weights)).into_inner();
    let chol = Cholesky::new(a)?;
    let l = chol.l_dirty();
    let mut ld = 0.0;
    for k in 0..l.nrows() {
        let lk = l[(k, k)].re;
        if !(lk > 0.0) {
            return None;
        }
        ld += 2.0 * lk.ln();
    }
    let v = chol.solve(values);
    let lev = (0..values.ncols()).map(|i| values.column(i).dotc(&v.column(i)).re).collect();
    Some((ld, lev, v))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::{christoffel_rescale, SharedSystem, TrigSystem};
    use std::sync::Arc;

    #[test]
    fn newton_reaches_kiefer_wolfowitz_optimum() {
        // Candidate set of 12 equispaced points for {1, e^{2πix}, e^{4πix}}:
        // uniform weights are D-optimal, leverage n everywhere.
        let s = TrigSystem::new(vec![vec![0], vec![1], vec![2]]).unwrap();
        let grid = DiscreteMeasure::equidistant_grid(1, 12);
        let ev = evaluate(&s, &grid.points, false);
        let mut w: Vec<f64> = (0..12).map(|i| 1.0 + i as f64).collect();
        let ld = weight_newton(&ev.values, &mut w);
        assert!(ld.abs() < 1e-12, "log det {ld}");
        let (_, lev, _) = leverages(&ev.values, &w).unwrap();
        assert!(lev.iter().all(|d| *d <= 3.0 + 1e-9));
    }

    #[test]
    fn rescaled_trig_from_exact_start() {
        let base: SharedSystem = Arc::new(TrigSystem::new(vec![vec![-1], vec![0], vec![1]]).unwrap());
        let r = christoffel_rescale(base, true);
        let cfg = LogdetConfig {
            optimizer: OptimizerConfig {
                max_restarts: 1,
                initial: Some(DiscreteMeasure::equidistant_grid(1, 3)),
                ..Default::default()
            },
            ..Default::default()
        };
        let res = optimize_logdet(&r, 3, &cfg).unwrap();
        assert!(res.exact);
        assert!(res.log_det.unwrap().abs() < 1e-12);
    }

    #[test]
    fn random_start_reaches_unit_determinant() {
        let base: SharedSystem = Arc::new(TrigSystem::new(vec![vec![0, 0], vec![1, 0], vec![0, 1], vec![1, 1]]).unwrap());
        let r = christoffel_rescale(base, true);
        let cfg = LogdetConfig {
            optimizer: OptimizerConfig { max_restarts: 3, seed: 5, ..Default::default() },
            ..Default::default()
        };
        let res = optimize_logdet(&r, 9, &cfg).unwrap();
        assert!(res.exact, "log det {:?}", res.log_det);
        assert!(res.mz_constant < 1e-5);
    }
}
