//! Equal-norm tight frames from D-optimal designs, and Parseval checks.
//!
//! For a maximizer `λ` of `det Σ λᵢ φ(xᵢ)φ(xᵢ)*` the transformed system
//! `ψ = A_λ^{-1/2} φ` satisfies `Σ λᵢ ψ(xᵢ)ψ(xᵢ)* = I`, `‖ψ(xᵢ)‖² = n` on the
//! support and `‖ψ(x)‖² ≤ n` everywhere.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::design::{gramian, optimize_logdet, restart_seed, thread_pool, DesignResult, LogdetConfig};
use crate::error::{invalid, Result};
use crate::linalg::{inner, norm_sqr, HermitianMatrix, C64};
use crate::measure::DiscreteMeasure;
use crate::system::{FunctionSystem, LinearCombinationSystem, SharedSystem};

/// Atoms with `λᵢ` at or below this are removed before renormalizing.
pub const SUPPORT_THRESHOLD: f64 = 1e-14;
/// Allowed deviation of `‖ψ(xᵢ)‖²` from `n` on the support, and of the
/// sampled maximum above `n`.
pub const CERTIFICATE_TOL: f64 = 1e-6;
/// Smallest admissible eigenvalue of `A_λ` relative to its trace.
pub const CONDITION_FLOOR: f64 = 1e-12;
const SAMPLE_CHUNK: usize = 4096;

#[derive(Debug, Clone)]
pub struct EntfConfig {
    pub logdet: LogdetConfig,
    /// Initial atom count; defaults to `2n`.
    pub n_points: Option<usize>,
    /// Random domain points for the sup-norm certificate.
    pub certificate_samples: usize,
}

impl Default for EntfConfig {
    fn default() -> Self {
        EntfConfig { logdet: LogdetConfig::default(), n_points: None, certificate_samples: 100_000 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    /// Largest `‖ψ(x)‖²` over the random samples.
    pub max_sampled_norm_sq: f64,
    /// `maxᵢ |‖ψ(xᵢ)‖² − n|` over the support.
    pub support_norm_deviation: f64,
    /// `|Σ λᵢ ‖ψ(xᵢ)‖² − n|`.
    pub trace_identity_error: f64,
    pub samples: usize,
}

#[derive(Debug, Clone)]
pub struct EntfResult {
    /// `A_λ^{-1/2}`.
    pub transform: HermitianMatrix,
    pub measure: DiscreteMeasure,
    /// `√n`.
    pub norm_cap: f64,
    pub certificate: Certificate,
    /// Whether both norm bounds of the certificate hold.
    pub certified: bool,
    pub design: DesignResult,
}

impl EntfResult {
    /// The frame system `ψ = A_λ^{-1/2} φ` over `base`.
    pub fn frame_system(&self, base: SharedSystem) -> Result<LinearCombinationSystem> {
        LinearCombinationSystem::new(base, self.transform.matrix().clone())
    }
}

/// Maximizes the Gramian determinant of the raw system, filters the support
/// and certifies the resulting frame.
pub fn build_entf(system: &dyn FunctionSystem, config: &EntfConfig) -> Result<EntfResult> {
    let n = system.len();
    if n == 0 {
        return Err(invalid("empty system"));
    }
    let n_points = config.n_points.unwrap_or(2 * n).max(n);
    let design = optimize_logdet(system, n_points, &config.logdet)?;

    let keep: Vec<usize> = (0..design.measure.len()).filter(|&i| design.measure.weights[i] > SUPPORT_THRESHOLD).collect();
    let mut measure = design.measure.select(&keep);
    measure.normalize_probability();

    let a = gramian(system, &measure)?;
    let transform = a.inverse_sqrt(CONDITION_FLOOR * a.trace())?;
    let certificate = certify(system, &transform, &measure, config.certificate_samples, config.logdet.optimizer.seed);
    let nf = n as f64;
    let certified = certificate.support_norm_deviation <= CERTIFICATE_TOL
        && certificate.max_sampled_norm_sq <= nf + CERTIFICATE_TOL;
    if !certified {
        log::warn!(
            "frame certificate failed: support deviation {:e}, sampled max {:e} (n = {n})",
            certificate.support_norm_deviation,
            certificate.max_sampled_norm_sq
        );
    }
    Ok(EntfResult { transform, measure, norm_cap: nf.sqrt(), certificate, certified, design })
}

/// Recomputes the frame certificate for a given transform and support.
pub fn certify(
    system: &dyn FunctionSystem,
    transform: &HermitianMatrix,
    measure: &DiscreteMeasure,
    samples: usize,
    seed: u64,
) -> Certificate {
    let n = system.len() as f64;
    let norm = |x: &[f64]| norm_sqr(&transform.mul_vec(&system.eval(x)));
    let support: Vec<f64> = measure.points.iter().map(|x| norm(x)).collect();
    let support_norm_deviation = support.iter().map(|v| (v - n).abs()).fold(0.0, f64::max);
    let trace: f64 = support.iter().zip(&measure.weights).map(|(v, w)| v * w).sum();
    let chunks = samples.div_ceil(SAMPLE_CHUNK);
    let max_sampled_norm_sq = thread_pool().install(|| {
        (0..chunks)
            .into_par_iter()
            .map(|c| {
                let mut rng = ChaCha8Rng::seed_from_u64(restart_seed(seed ^ 0xC3A5_C85C_97CB_3127, c));
                let count = SAMPLE_CHUNK.min(samples - c * SAMPLE_CHUNK);
                (0..count).map(|_| norm(&system.sample_point(&mut rng))).fold(f64::NEG_INFINITY, f64::max)
            })
            .reduce(|| f64::NEG_INFINITY, f64::max)
    });
    Certificate { max_sampled_norm_sq, support_norm_deviation, trace_identity_error: (trace - n).abs(), samples }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParsevalReport {
    /// `max |Σ wᵢ |⟨a, φ(xᵢ)⟩|² − 1|` over random unit `a`.
    pub max_relative_deviation: f64,
    pub mz_constant: f64,
    pub trials: usize,
}

/// Tests `Σ wᵢ |⟨a, φ(xᵢ)⟩|² = ‖a‖²` on random complex unit vectors.
pub fn verify_parseval(system: &dyn FunctionSystem, measure: &DiscreteMeasure, trials: usize, seed: u64) -> Result<ParsevalReport> {
    let a = gramian(system, measure)?;
    let mz_constant = a.spectral_distance_to_identity()?;
    let n = system.len();
    let values: Vec<Vec<C64>> = measure.points.iter().map(|x| system.eval(x)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let mut coef: Vec<C64> = (0..n).map(|_| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)).collect();
        let norm = norm_sqr(&coef).sqrt();
        if norm == 0.0 {
            continue;
        }
        coef.iter_mut().for_each(|c| *c /= norm);
        let sum: f64 = values.iter().zip(&measure.weights).map(|(phi, w)| w * inner(&coef, phi).norm_sqr()).sum();
        worst = worst.max((sum - 1.0).abs());
    }
    Ok(ParsevalReport { max_relative_deviation: worst, mz_constant, trials })
}

/// Shared handle to the frame system built from `base`.
pub fn frame_system(base: SharedSystem, result: &EntfResult) -> Result<SharedSystem> {
    Ok(Arc::new(result.frame_system(base)?))
}
