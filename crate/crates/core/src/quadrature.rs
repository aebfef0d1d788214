//! Builders for exact `L₂`-MZ designs, Tchakaloff quadrature and exact
//! `L_p`-MZ designs for even `p`, with their verification oracles.

use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::caratheodory::{reduce_conic, reduce_convex, reduce_moment_vector, AtomizedGramian, DEFAULT_TOL};
use crate::design::{mz_constant, optimize_frobenius, OptimizerConfig, WeightMode};
use crate::error::{invalid, Error, Result};
use crate::index_set::MultiIndexSet;
use crate::linalg::{HermitianMatrix, C64};
use crate::measure::{DiscreteMeasure, Domain};
use crate::system::{
    trig_phase, trig_system, ConstantAugmentedSystem, FunctionSystem, LinearCombinationSystem, ProductLiftSystem,
    SharedSystem,
};

/// Default cap on the dimension of a lifted space.
pub const DEFAULT_LIFT_CAP: usize = 2000;
/// Per-basis-function tolerance for quadrature exactness.
pub const QUADRATURE_TOL: f64 = 1e-10;
/// Largest increase of `ε` a reduction may cause before it is rejected.
pub const REDUCTION_SLACK: f64 = 1e-10;
/// Relative eigenvalue threshold when orthonormalizing a system.
pub const ORTHONORMAL_RANK_TOL: f64 = 1e-10;
/// Largest `n²` for which the product span is measured numerically.
const NUMERIC_SPAN_CAP: usize = 250_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TargetSpace {
    Torus { index_set: Vec<Vec<i64>> },
    Sphere { degree: usize },
    Other { domain: String, functions: usize },
}

impl TargetSpace {
    /// Best-effort description of `system`; sphere degrees are inferred from
    /// `n = (m+1)²`.
    pub fn of(system: &dyn FunctionSystem) -> Self {
        if let Some(freqs) = system.frequencies() {
            return TargetSpace::Torus { index_set: freqs.indices().to_vec() };
        }
        let n = system.len();
        let root = (n as f64).sqrt().round() as usize;
        match system.domain() {
            Domain::Sphere if root * root == n && root > 0 => TargetSpace::Sphere { degree: root - 1 },
            domain => TargetSpace::Other { domain: domain.name().to_string(), functions: n },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DesignKind {
    /// Exact `L_p`-MZ inequality; `p = 2` is the plain case.
    Mz { p: u32 },
    /// Positive quadrature rule exact on the space.
    Quadrature,
}

#[derive(Debug, Clone)]
pub struct MzDesign {
    pub measure: DiscreteMeasure,
    pub target: TargetSpace,
    pub kind: DesignKind,
    /// `ε` of the (possibly lifted) `L₂` problem, or the largest quadrature
    /// error over the basis for quadrature rules.
    pub mz_constant: f64,
    pub exact: bool,
    pub eps_target: f64,
    /// `ε` before Carathéodory reduction.
    pub pre_reduction_mz_constant: f64,
    pub seed: u64,
    pub restarts: usize,
    pub iterations: usize,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct BuildConfig {
    pub optimizer: OptimizerConfig,
    /// Point budget for the optimizer; defaults to the product-span dimension.
    pub n_points: Option<usize>,
    pub reduction_tol: f64,
    pub lift_cap: usize,
}

impl Default for BuildConfig {
    fn default() -> Self {
        BuildConfig { optimizer: OptimizerConfig::default(), n_points: None, reduction_tol: DEFAULT_TOL, lift_cap: DEFAULT_LIFT_CAP }
    }
}

/// Dimension of `span{φ_k φ̄_l}`: `|D(I)|` for trigonometric systems, the
/// numerical rank of sampled products otherwise.
pub fn product_span_dimension(system: &dyn FunctionSystem, seed: u64) -> Result<usize> {
    if let Some(freqs) = system.frequencies() {
        return Ok(freqs.difference_set().len());
    }
    let n = system.len();
    if n * n > NUMERIC_SPAN_CAP {
        return Err(Error::SizeLimit { dim: n * n, cap: NUMERIC_SPAN_CAP });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points = (0..n * n + n).map(|_| system.sample_point(&mut rng)).collect();
    Ok(AtomizedGramian::new(system, DiscreteMeasure::uniform(points))?.n_span())
}

/// Whether the constant function lies in the span of the system.
pub fn constant_in_span(system: &dyn FunctionSystem) -> bool {
    if let Some(freqs) = system.frequencies() {
        return freqs.contains_zero();
    }
    let n = system.len();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5EED);
    let k = 4 * n + 8;
    let mut phi = DMatrix::from_element(k, n, C64::new(0.0, 0.0));
    for r in 0..k {
        let v = system.eval(&system.sample_point(&mut rng));
        for c in 0..n {
            phi[(r, c)] = v[c];
        }
    }
    let ones = DVector::from_element(k, C64::new(1.0, 0.0));
    let svd = phi.clone().svd(true, true);
    let Ok(c) = svd.solve(&ones, 1e-12) else {
        return false;
    };
    (&phi * c - ones).norm() <= 1e-9 * (k as f64).sqrt()
}

/// Returns an orthonormal system with the same span: `system` itself when
/// its Gram matrix is already the identity, otherwise `Λ^{-1/2} U* φ`.
pub fn orthonormalize(system: SharedSystem) -> Result<SharedSystem> {
    let gram = match system.exact_gram() {
        Some(g) => g,
        None => {
            let rule = system
                .reference_rule(1)
                .ok_or_else(|| invalid("system has neither a closed-form Gram matrix nor a reference rule"))?;
            crate::design::gramian(&*system, &rule)?
        }
    };
    if gram.frobenius_distance_to_identity_sq().sqrt() <= 1e-12 {
        return Ok(system);
    }
    let eig = gram.eigh()?;
    let top = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
    let keep: Vec<usize> = (0..eig.eigenvalues.len()).filter(|&k| eig.eigenvalues[k] > ORTHONORMAL_RANK_TOL * top).collect();
    let n = system.len();
    let coeffs = DMatrix::from_fn(keep.len(), n, |r, c| eig.eigenvectors[(c, keep[r])].conj() / eig.eigenvalues[keep[r]].sqrt());
    Ok(Arc::new(LinearCombinationSystem::new(system, coeffs)?))
}

/// Optimizes an exact `L₂`-MZ design and prunes it by Carathéodory
/// reduction, conic when constants lie in the span and convex otherwise.
pub fn build_exact_l2_mz(system: &SharedSystem, config: &BuildConfig) -> Result<MzDesign> {
    let target = TargetSpace::of(&**system);
    let ortho = orthonormalize(system.clone())?;
    let n_points = match config.n_points {
        Some(n) => n,
        None => product_span_dimension(&*ortho, config.optimizer.seed)?,
    };
    let result = optimize_frobenius(&*ortho, n_points, &config.optimizer)?;
    let pre = result.mz_constant;
    let mut measure = result.measure;
    let mut warnings = Vec::new();
    let mut post = pre;

    if config.optimizer.weight_mode == WeightMode::Free {
        let atomized = AtomizedGramian::new(&*ortho, measure.clone())?;
        let reduction = if constant_in_span(&*ortho) {
            reduce_conic(&atomized, config.reduction_tol)
        } else {
            reduce_convex(&atomized, config.reduction_tol)
        };
        match reduction {
            Ok(r) => {
                let eps = mz_constant(&*ortho, &r.measure)?;
                if eps <= pre + REDUCTION_SLACK {
                    warnings.extend(r.warnings);
                    measure = r.measure;
                    post = eps;
                } else {
                    warnings.push(format!("reduction raised eps from {pre:e} to {eps:e}; kept the unreduced design"));
                }
            }
            Err(e) => warnings.push(format!("reduction skipped: {e}")),
        }
    }
    Ok(MzDesign {
        measure,
        target,
        kind: DesignKind::Mz { p: 2 },
        mz_constant: post,
        exact: post <= config.optimizer.eps_target,
        eps_target: config.optimizer.eps_target,
        pre_reduction_mz_constant: pre,
        seed: config.optimizer.seed,
        restarts: result.restarts_used,
        iterations: result.iterations,
        warnings,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InnerProductReport {
    /// `max |Σ wᵢ f(xᵢ)ḡ(xᵢ) − ⟨f, g⟩|` over the trials.
    pub max_deviation: f64,
    /// `max (deviation − ε‖f‖‖g‖)`; nonpositive up to rounding.
    pub max_excess: f64,
    pub mz_constant: f64,
}

/// Compares discrete inner products of random `f, g ∈ span φ` against the
/// coefficient form `d* G c`.
pub fn verify_inner_product_discretization(
    system: &dyn FunctionSystem,
    measure: &DiscreteMeasure,
    trials: usize,
    seed: u64,
) -> Result<InnerProductReport> {
    let g = system.exact_gram().ok_or_else(|| invalid("system has no closed-form Gram matrix"))?;
    let eps = mz_constant(system, measure)?;
    let n = system.len();
    let values: Vec<Vec<C64>> = measure.points.iter().map(|x| system.eval(x)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draw = |rng: &mut ChaCha8Rng| -> Vec<C64> {
        (0..n).map(|_| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)).collect()
    };
    let (mut max_deviation, mut max_excess) = (0.0f64, f64::NEG_INFINITY);
    for _ in 0..trials {
        let c = draw(&mut rng);
        let d = draw(&mut rng);
        let exact: C64 = (0..n).flat_map(|k| (0..n).map(move |l| (k, l))).map(|(k, l)| c[k] * d[l].conj() * g.matrix()[(l, k)]).sum();
        let discrete: C64 = values
            .iter()
            .zip(&measure.weights)
            .map(|(phi, w)| {
                let f: C64 = c.iter().zip(phi).map(|(a, b)| a * b).sum();
                let h: C64 = d.iter().zip(phi).map(|(a, b)| a * b).sum();
                f * h.conj() * *w
            })
            .sum();
        let dev = (discrete - exact).norm();
        let norm_f = g.quadratic_form(&c.iter().map(|z| z.conj()).collect::<Vec<_>>()).max(0.0).sqrt();
        let norm_g = g.quadratic_form(&d.iter().map(|z| z.conj()).collect::<Vec<_>>()).max(0.0).sqrt();
        max_deviation = max_deviation.max(dev);
        max_excess = max_excess.max(dev - eps * norm_f * norm_g);
    }
    Ok(InnerProductReport { max_deviation, max_excess: max_excess.max(0.0).min(max_deviation), mz_constant: eps })
}

/// Positive quadrature exact on `span φ` with at most `2n + 1` atoms:
/// an exact design for `span φ ∪ {1}`, then a second reduction on the
/// stacked real and imaginary moments.
pub fn build_tchakaloff(system: &SharedSystem, config: &BuildConfig) -> Result<MzDesign> {
    let integrals = system.integrals().ok_or_else(|| invalid("quadrature needs the integrals of the basis"))?;
    let n = system.len();
    let step1_system: SharedSystem =
        if constant_in_span(&**system) { system.clone() } else { Arc::new(ConstantAugmentedSystem::new(system.clone())) };
    let step1 = build_exact_l2_mz(&step1_system, config)?;
    let m = &step1.measure;

    let mut values = DMatrix::zeros(2 * n, m.len());
    for (i, x) in m.points.iter().enumerate() {
        for (k, v) in system.eval(x).into_iter().enumerate() {
            values[(2 * k, i)] = v.re;
            values[(2 * k + 1, i)] = v.im;
        }
    }
    let reduced = reduce_moment_vector(&values, &m.weights, config.reduction_tol)?;
    let mut measure = m.select(&reduced.kept);
    measure.weights = reduced.weights;
    assert!(measure.len() <= 2 * n + 1, "quadrature has {} atoms for n = {n}", measure.len());

    let err = quadrature_error(&**system, &measure, &integrals);
    let mut warnings = step1.warnings;
    warnings.extend(reduced.warnings);
    Ok(MzDesign {
        measure,
        target: TargetSpace::of(&**system),
        kind: DesignKind::Quadrature,
        mz_constant: err,
        exact: err <= QUADRATURE_TOL,
        eps_target: QUADRATURE_TOL,
        pre_reduction_mz_constant: quadrature_error(&**system, m, &integrals),
        seed: step1.seed,
        restarts: step1.restarts,
        iterations: step1.iterations,
        warnings,
    })
}

/// `maxₖ |Σ wᵢ φₖ(xᵢ) − ∫φₖ|`.
pub fn quadrature_error(system: &dyn FunctionSystem, measure: &DiscreteMeasure, integrals: &[C64]) -> f64 {
    let mut sums = vec![C64::new(0.0, 0.0); system.len()];
    for (x, w) in measure.points.iter().zip(&measure.weights) {
        for (s, v) in sums.iter_mut().zip(system.eval(x)) {
            *s += v * *w;
        }
    }
    sums.iter().zip(integrals).map(|(s, i)| (s - i).norm()).fold(0.0, f64::max)
}

/// The system whose exact `L₂` designs are exact `L_p` designs for `system`:
/// `system` itself for `p = 2`, the span of all `p/2`-fold products otherwise.
pub fn lift_system(system: &SharedSystem, p: u32, cap: usize) -> Result<SharedSystem> {
    if p < 2 || p % 2 == 1 {
        return Err(invalid(format!("p must be even and at least 2, got {p}")));
    }
    if p == 2 {
        return Ok(system.clone());
    }
    let q = (p / 2) as usize;
    Ok(match system.frequencies() {
        Some(freqs) => {
            let j = freqs.sumset(q)?;
            if j.len() > cap {
                return Err(Error::SizeLimit { dim: j.len(), cap });
            }
            Arc::new(trig_system(j))
        }
        None => {
            let count = binomial(system.len() + q - 1, q);
            if count > cap {
                return Err(Error::SizeLimit { dim: count, cap });
            }
            Arc::new(ProductLiftSystem::all_monomials(system.clone(), q)?)
        }
    })
}

/// Exact `L_p`-MZ design for even `p` via an exact `L₂` design on the span
/// of all `p/2`-fold products.
pub fn build_lp_mz_even(system: &SharedSystem, p: u32, config: &BuildConfig) -> Result<MzDesign> {
    if p < 2 || p % 2 == 1 {
        return Err(invalid(format!("p must be even and at least 2, got {p}")));
    }
    if p == 2 {
        return build_exact_l2_mz(system, config);
    }
    let lifted = lift_system(system, p, config.lift_cap)?;
    let mut design = build_exact_l2_mz(&lifted, config)?;
    design.kind = DesignKind::Mz { p };
    design.target = TargetSpace::of(&**system);
    Ok(design)
}

/// `binom(n, k)`, saturating.
pub fn binomial(n: usize, k: usize) -> usize {
    let k = k.min(n.saturating_sub(k));
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
        if acc > usize::MAX as u128 {
            return usize::MAX;
        }
    }
    acc as usize
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LpReport {
    /// `max |Σ wᵢ|f(xᵢ)|^p − ∫|f|^p| / ∫|f|^p`.
    pub max_relative_deviation: f64,
    pub trials: usize,
}

/// `∫|f|^p` for `f = Σ cₖ e_k` by expanding `f^{p/2}` over integer
/// frequencies and applying Parseval.
pub fn trig_lp_norm_p(index_set: &MultiIndexSet, coeffs: &[C64], p: u32) -> f64 {
    let base: BTreeMap<Vec<i64>, C64> = index_set.iter().map(|k| k.to_vec()).zip(coeffs.iter().copied()).collect();
    let mut power = base.clone();
    for _ in 1..p / 2 {
        let mut next: BTreeMap<Vec<i64>, C64> = BTreeMap::new();
        for (a, ca) in &power {
            for (b, cb) in &base {
                let k: Vec<i64> = a.iter().zip(b).map(|(x, y)| x + y).collect();
                *next.entry(k).or_insert(C64::new(0.0, 0.0)) += ca * cb;
            }
        }
        power = next;
    }
    power.values().map(|c| c.norm_sqr()).sum()
}

/// Checks `Σ wᵢ |f(xᵢ)|^p = ∫|f|^p` for random `f ∈ span φ`. Trigonometric
/// systems use the convolution oracle; others the system's reference rule.
pub fn verify_lp(system: &dyn FunctionSystem, measure: &DiscreteMeasure, p: u32, trials: usize, seed: u64) -> Result<LpReport> {
    let n = system.len();
    let reference = match system.frequencies() {
        Some(_) => None,
        None => Some(
            system
                .reference_rule((p / 2).max(1) as usize)
                .ok_or_else(|| invalid("no reference rule to integrate |f|^p"))?,
        ),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    let lp = |c: &[C64], pts: &[Vec<f64>], w: &[f64]| -> f64 {
        pts.iter()
            .zip(w)
            .map(|(x, wi)| {
                let f: C64 = c.iter().zip(system.eval(x)).map(|(a, b)| a * b).sum();
                wi * f.norm().powi(p as i32)
            })
            .sum()
    };
    for _ in 0..trials {
        let c: Vec<C64> = (0..n).map(|_| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)).collect();
        let exact = match (&reference, system.frequencies()) {
            (_, Some(freqs)) => trig_lp_norm_p(freqs, &c, p),
            (Some(rule), None) => lp(&c, &rule.points, &rule.weights),
            (None, None) => unreachable!(),
        };
        let discrete = lp(&c, &measure.points, &measure.weights);
        worst = worst.max((discrete - exact).abs() / exact.max(f64::MIN_POSITIVE));
    }
    Ok(LpReport { max_relative_deviation: worst, trials })
}

/// Exact-phase Gramian deviation for trigonometric designs: every entry
/// `Σ wᵢ e^{2πi⟨k−l, xᵢ⟩}` is formed from a reduced phase, so huge
/// frequencies lose no accuracy. Returns `‖A − I‖₂→₂`.
pub fn trig_exact_phase_mz_constant(index_set: &MultiIndexSet, measure: &DiscreteMeasure) -> Result<f64> {
    let idx = index_set.indices();
    let n = idx.len();
    let mut a = DMatrix::zeros(n, n);
    for r in 0..n {
        for c in 0..n {
            let h: Vec<i64> = idx[r].iter().zip(&idx[c]).map(|(x, y)| x - y).collect();
            let mut s = C64::new(0.0, 0.0);
            for (x, w) in measure.points.iter().zip(&measure.weights) {
                let t = std::f64::consts::TAU * trig_phase(&h, x);
                s += C64::new(t.cos(), t.sin()) * *w;
            }
            a[(r, c)] = s;
        }
    }
    HermitianMatrix::new(a)?.spectral_distance_to_identity()
}
