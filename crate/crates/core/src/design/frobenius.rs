use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Result};
use crate::measure::{DiscreteMeasure, Domain};
use crate::system::FunctionSystem;

use super::bfgs::{self, Stop};
use crate::linalg::C64;

use super::{
    evaluate, finalize, frobenius_parts, weighted_gram, restart_seed, run_restarts, DesignResult, Normalization, OptimizerConfig,
    WeightMode, BLOCK_ITERS, RELATIVE_IMPROVEMENT_TOL,
};

/// Iterations of the final point-only pass with frozen weights.
pub const POLISH_ITERS: usize = 200;
/// Blocks over which progress is measured before an atom is relocated.
pub const STALL_WINDOW: usize = 5;
/// A window counts as stalled when `f` shrank by less than this fraction.
pub const STALL_RATIO: f64 = 1e-3;
/// Point-block length with equal weights. Nothing else moves between
/// blocks, so longer blocks keep the BFGS curvature information.
pub const EQUAL_BLOCK_ITERS: usize = 300;
/// Relocations allowed per restart.
pub const MAX_RELOCATIONS: usize = 40;
/// Relocation only fires above this objective value; below it slow progress
/// is ill-conditioning rather than a spurious minimum.
pub const RELOCATION_FLOOR: f64 = 1e-4;
/// Random candidates scored per relocation.
pub const RELOCATION_CANDIDATES: usize = 512;

struct Candidate {
    measure: DiscreteMeasure,
    eps: f64,
    frob: f64,
    iterations: usize,
    trace: Vec<f64>,
}

/// Minimizes `‖Σ wᵢ φ(xᵢ)φ(xᵢ)* − I‖_F²` over `n_points` atoms, alternating
/// BFGS blocks on points and weights, over several seeded restarts.
pub fn optimize_frobenius(system: &dyn FunctionSystem, n_points: usize, config: &OptimizerConfig) -> Result<DesignResult> {
    if n_points == 0 {
        return Err(invalid("at least one point is required"));
    }
    if !system.has_jacobian() {
        return Err(invalid("optimization requires a system with a Jacobian"));
    }
    if let Some(init) = &config.initial {
        if init.len() != n_points || init.point_dim() != system.point_dim() {
            return Err(invalid("initial measure does not match the requested point count and dimension"));
        }
    }
    let restarts = config.max_restarts.max(1);
    let runs = run_restarts(
        restarts,
        config.stop_on_success,
        |i| {
            let out = run_restart(system, n_points, config, i);
            if out.is_none() {
                log::warn!("restart {i} abandoned after a non-finite objective");
            }
            out
        },
        |c: &Candidate| c.eps <= config.eps_target,
    );
    let restarts_used = runs.len();
    let (best_restart, best) = runs
        .into_iter()
        .min_by(|(ia, a), (ib, b)| a.eps.total_cmp(&b.eps).then(a.frob.total_cmp(&b.frob)).then(ia.cmp(ib)))
        .ok_or_else(|| invalid("every restart produced a non-finite objective"))?;
    log::info!(
        "best restart {best_restart} of {restarts_used}: eps = {:e}, {} iterations",
        best.eps,
        best.iterations
    );
    Ok(DesignResult {
        measure: best.measure,
        mz_constant: best.eps,
        frobenius_residual: best.frob,
        log_det: None,
        exact: best.eps <= config.eps_target,
        iterations: best.iterations,
        restarts_used,
        best_restart,
        seed: config.seed,
        objective_trace: best.trace,
    })
}

fn initial_measure(
    system: &dyn FunctionSystem,
    n_points: usize,
    config: &OptimizerConfig,
    index: usize,
    rng: &mut ChaCha8Rng,
) -> DiscreteMeasure {
    if index == 0 {
        if let Some(init) = &config.initial {
            return init.clone();
        }
    }
    let points = (0..n_points).map(|_| system.sample_point(rng)).collect();
    DiscreteMeasure::uniform(points)
}

fn run_restart(system: &dyn FunctionSystem, n_points: usize, config: &OptimizerConfig, index: usize) -> Option<Candidate> {
    let mut rng = ChaCha8Rng::seed_from_u64(restart_seed(config.seed, index));
    let init = initial_measure(system, n_points, config, index, &mut rng);
    let d = system.point_dim();
    let scales = system.coordinate_scales();
    let domain = system.domain();
    let free = config.weight_mode == WeightMode::Free;

    let mut y: Vec<f64> = init.points.iter().flat_map(|p| p.iter().zip(&scales).map(|(c, s)| c * s)).collect();
    let mut w = init.weights;
    let target = (0.1 * config.eps_target).powi(2);
    let mut iterations = 0;
    let mut trace = Vec::new();
    let mut f = point_phase(system, &mut y, &w, &scales, 0)?.value;
    let mut window_start = f;
    let mut window_len = 0;
    let mut relocations = 0;

    while f > target && iterations < config.max_iters {
        let before = f;
        let block = if free { BLOCK_ITERS } else { EQUAL_BLOCK_ITERS };
        let budget = block.min(config.max_iters - iterations);
        let out = point_phase(system, &mut y, &w, &scales, budget)?;
        iterations += out.iterations;
        f = out.value;
        if free {
            let out = weight_phase(system, &y, &mut w, &scales, BLOCK_ITERS)?;
            iterations += out.iterations;
            project_weights(&mut w, config.normalization);
            f = point_phase(system, &mut y, &w, &scales, 0)?.value;
        }
        if domain == Domain::Sphere {
            renormalize_sphere(&mut y, &scales, d);
        }
        trace.push(f);
        if f <= target {
            break;
        }
        window_len += 1;
        let flat = before - f <= RELATIVE_IMPROVEMENT_TOL * before;
        let stalled = flat || (window_len >= STALL_WINDOW && f > (1.0 - STALL_RATIO) * window_start);
        if stalled && f > RELOCATION_FLOOR && relocations < MAX_RELOCATIONS {
            relocate(system, &mut y, &mut w, &scales, free, config.normalization, &mut rng);
            relocations += 1;
            f = point_phase(system, &mut y, &w, &scales, 0)?.value;
        } else if flat {
            break;
        }
        if window_len >= STALL_WINDOW || stalled {
            window_start = f;
            window_len = 0;
        }
    }
    if f > target {
        let out = point_phase(system, &mut y, &w, &scales, POLISH_ITERS)?;
        iterations += out.iterations;
        trace.push(out.value);
    }

    let points = unscale(&y, &scales, d);
    let (measure, eps, frob) = finalize(system, DiscreteMeasure { points, weights: w }, config.normalization).ok()?;
    if !eps.is_finite() {
        return None;
    }
    Some(Candidate { measure, eps, frob, iterations, trace })
}

/// Moves one atom to the random candidate where adding mass decreases the
/// objective fastest, i.e. where `Re φ(x)* (A − I) φ(x)` is smallest. The
/// lightest atom moves when weights are free, otherwise the atom with the
/// largest such score.
fn relocate(
    system: &dyn FunctionSystem,
    y: &mut [f64],
    w: &mut [f64],
    scales: &[f64],
    free: bool,
    normalization: Normalization,
    rng: &mut ChaCha8Rng,
) {
    let d = system.point_dim();
    let points = unscale(y, scales, d);
    let ev = evaluate(system, &points, false);
    let mut r = weighted_gram(&ev.values, w);
    for k in 0..r.nrows() {
        r[(k, k)] -= C64::new(1.0, 0.0);
    }
    let score = |v: &DMatrix<C64>| -> Vec<f64> {
        let rv = &r * v;
        (0..v.ncols()).map(|i| v.column(i).dotc(&rv.column(i)).re).collect()
    };
    let candidates: Vec<Vec<f64>> = (0..RELOCATION_CANDIDATES).map(|_| system.sample_point(rng)).collect();
    let cand_scores = score(&evaluate(system, &candidates, false).values);
    let Some(best) = (0..candidates.len()).min_by(|&a, &b| cand_scores[a].total_cmp(&cand_scores[b])) else {
        return;
    };
    let victim = if free {
        (0..w.len()).min_by(|&a, &b| w[a].total_cmp(&w[b]))
    } else {
        let atom_scores = score(&ev.values);
        (0..w.len()).max_by(|&a, &b| atom_scores[a].total_cmp(&atom_scores[b]))
    };
    let Some(victim) = victim else { return };
    for j in 0..d {
        y[victim * d + j] = candidates[best][j] * scales[j];
    }
    if free {
        w[victim] = w.iter().sum::<f64>() / w.len() as f64;
        project_weights(w, normalization);
    }
    log::debug!("relocated atom {victim} (candidate score {:e})", cand_scores[best]);
}

fn unscale(y: &[f64], scales: &[f64], d: usize) -> Vec<Vec<f64>> {
    y.chunks(d).map(|c| c.iter().zip(scales).map(|(v, s)| v / s).collect()).collect()
}

fn renormalize_sphere(y: &mut [f64], scales: &[f64], d: usize) {
    for c in y.chunks_mut(d) {
        let r = c.iter().zip(scales).map(|(v, s)| (v / s).powi(2)).sum::<f64>().sqrt();
        if r > 0.0 {
            c.iter_mut().for_each(|v| *v /= r);
        }
    }
}

/// BFGS over scaled point coordinates with weights frozen. `iters = 0`
/// only evaluates the objective.
fn point_phase(system: &dyn FunctionSystem, y: &mut [f64], w: &[f64], scales: &[f64], iters: usize) -> Option<bfgs::Outcome> {
    let d = system.point_dim();
    let out = bfgs::minimize(y, iters, |y, grad| {
        let points = unscale(y, scales, d);
        let ev = evaluate(system, &points, true);
        let (f, pg, _) = frobenius_parts(&ev, w, d, true);
        for (gi, g) in grad.chunks_mut(d).zip(&pg) {
            for j in 0..d {
                gi[j] = g[j] / scales[j];
            }
        }
        f
    });
    (out.stop != Stop::NotFinite).then_some(out)
}

fn weight_phase(system: &dyn FunctionSystem, y: &[f64], w: &mut [f64], scales: &[f64], iters: usize) -> Option<bfgs::Outcome> {
    let d = system.point_dim();
    let points = unscale(y, scales, d);
    let ev = evaluate(system, &points, false);
    let out = bfgs::minimize(w, iters, |w, grad| {
        let (f, _, wg) = frobenius_parts(&ev, w, d, false);
        grad.copy_from_slice(&wg);
        f
    });
    (out.stop != Stop::NotFinite).then_some(out)
}

fn project_weights(w: &mut [f64], normalization: Normalization) {
    w.iter_mut().for_each(|v| *v = v.max(0.0));
    if normalization == Normalization::Probability {
        let total: f64 = w.iter().sum();
        if total > 0.0 {
            w.iter_mut().for_each(|v| *v /= total);
        }
    }
}
