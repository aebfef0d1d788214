//! Sampling recovery in a reproducing kernel Hilbert space with known
//! Mercer spectrum, from an exact MZ design for the density-modified
//! eigenfunctions.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::caratheodory::{reduce_convex, AtomizedGramian};
use crate::design::{optimize_frobenius, OptimizerConfig};
use crate::error::{invalid, Error, Result};
use crate::linalg::C64;
use crate::measure::DiscreteMeasure;
use crate::quadrature::product_span_dimension;
use crate::spectrum::MercerSpectrum;
use crate::system::density_modified_system;

/// Bound on `‖A*A − I‖_F` for an operator to count as exact.
pub const ORTHONORMALITY_TOL: f64 = 1e-8;
/// Test-function truncation as a multiple of `n`.
pub const DEFAULT_TRUNCATION_FACTOR: usize = 50;

#[derive(Debug, Clone, Default)]
pub struct RecoveryConfig {
    pub optimizer: OptimizerConfig,
    /// Defaults to the product-span dimension of the modified system.
    pub n_points: Option<usize>,
}

/// `S f = Σ_j c_j ψ_j` with `c = Ψ* D_λ D_ω^{-1} f(x)`.
#[derive(Debug, Clone)]
pub struct RecoveryOperator {
    pub n: usize,
    pub measure: DiscreteMeasure,
    /// `ω_n(xⁱ)`.
    pub omega: Vec<f64>,
    /// `A = D_λ^{1/2} D_ω^{-1/2} Ψ`, `N × n`.
    pub system_matrix: DMatrix<C64>,
    /// `‖A*A − I‖_F`.
    pub orthonormality_defect: f64,
    pub tail_trace: f64,
    /// Whether the truncation separates eigenvalues of equal size.
    pub splits_tie: bool,
    pub spectrum: Arc<dyn MercerSpectrum>,
}

/// Designs the sample points, reduces them and assembles the operator.
pub fn build_recovery(spectrum: Arc<dyn MercerSpectrum>, n: usize, config: &RecoveryConfig) -> Result<RecoveryOperator> {
    let system = density_modified_system(spectrum.clone(), n)?;
    let n_points = match config.n_points {
        Some(p) => p,
        None => product_span_dimension(&system, config.optimizer.seed)?,
    };
    let design = optimize_frobenius(&system, n_points, &config.optimizer)?;
    let mut measure = design.measure;
    if measure.len() > n * n + 1 {
        let reduced = reduce_convex(&AtomizedGramian::new(&system, measure.clone())?, crate::caratheodory::DEFAULT_TOL)?;
        measure = reduced.measure;
    }
    let op = assemble(spectrum, n, measure, system.tail_trace())?;
    if op.orthonormality_defect > ORTHONORMALITY_TOL {
        return Err(Error::NonExactDesign { mz_constant: op.orthonormality_defect });
    }
    Ok(op)
}

/// Builds the operator for a given design without any optimization.
pub fn assemble(spectrum: Arc<dyn MercerSpectrum>, n: usize, measure: DiscreteMeasure, tail_trace: f64) -> Result<RecoveryOperator> {
    let system = density_modified_system(spectrum.clone(), n)?;
    let big_n = measure.len();
    let omega: Vec<f64> = measure.points.iter().map(|x| system.omega(x)).collect();
    let mut a = DMatrix::zeros(big_n, n);
    for (i, x) in measure.points.iter().enumerate() {
        let psi = spectrum.eigenfunctions(x, n);
        let f = (measure.weights[i].max(0.0) / omega[i]).sqrt();
        for j in 0..n {
            a[(i, j)] = psi[j] * f;
        }
    }
    let gram = a.adjoint() * &a;
    let defect = (gram - DMatrix::<C64>::identity(n, n)).norm();
    Ok(RecoveryOperator {
        n,
        measure,
        omega,
        system_matrix: a,
        orthonormality_defect: defect,
        tail_trace,
        splits_tie: spectrum.splits_tie(n),
        spectrum,
    })
}

/// Recovered coefficients together with the eigenfunctions they refer to.
#[derive(Debug, Clone)]
pub struct Recovered {
    pub coeffs: Vec<C64>,
    spectrum: Arc<dyn MercerSpectrum>,
}

impl Recovered {
    pub fn eval(&self, x: &[f64]) -> C64 {
        let psi = self.spectrum.eigenfunctions(x, self.coeffs.len());
        self.coeffs.iter().zip(psi).map(|(c, p)| c * p).sum()
    }
}

impl RecoveryOperator {
    pub fn len(&self) -> usize {
        self.measure.len()
    }

    pub fn is_empty(&self) -> bool {
        self.measure.is_empty()
    }

    /// `‖A*‖₂→₂`.
    pub fn adjoint_norm(&self) -> f64 {
        self.system_matrix.singular_values().max()
    }

    /// Per-sample factors `√(λᵢ/ωᵢ)`, so that `c = A* (factor ⊙ f)`.
    fn sample_factors(&self) -> Vec<f64> {
        self.measure.weights.iter().zip(&self.omega).map(|(w, o)| (w.max(0.0) / o).sqrt()).collect()
    }

    /// `c = A* D_λ^{1/2} D_ω^{-1/2} f(x)`.
    pub fn apply(&self, samples: &[C64]) -> Result<Recovered> {
        if samples.len() != self.len() {
            return Err(invalid(format!("expected {} samples, got {}", self.len(), samples.len())));
        }
        let scaled = DVector::from_iterator(self.len(), samples.iter().zip(self.sample_factors()).map(|(f, s)| f * s));
        let c = self.system_matrix.adjoint() * scaled;
        Ok(Recovered { coeffs: c.iter().copied().collect(), spectrum: self.spectrum.clone() })
    }
}

pub fn apply_recovery(op: &RecoveryOperator, samples: &[C64]) -> Result<Recovered> {
    op.apply(samples)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecoveryReport {
    /// `max ‖f − Sf‖² / (3 Σ_{j>n} σ_j²)`.
    pub max_ratio: f64,
    pub mean_ratio: f64,
    pub trials: usize,
    /// Test functions use eigenpairs `0..truncation`.
    pub truncation: usize,
    pub bound: f64,
    pub splits_tie: bool,
}

/// Squared `L₂` error of `S` on `f = Σ_{j<J} f_j ψ_j`, exactly in
/// coefficient space: `Σ_{j≥n} |f_j|² + ‖c − f_{<n}‖²`.
pub fn coefficient_error(op: &RecoveryOperator, coeffs: &[C64]) -> f64 {
    let n = op.n;
    let samples: Vec<C64> = op
        .measure
        .points
        .iter()
        .map(|x| op.spectrum.eigenfunctions(x, coeffs.len()).iter().zip(coeffs).map(|(p, c)| p * c).sum())
        .collect();
    let c = op.apply(&samples).expect("sample count matches the design").coeffs;
    let tail: f64 = coeffs.iter().skip(n).map(|z| z.norm_sqr()).sum();
    let head: f64 = (0..n).map(|j| (c[j] - coeffs.get(j).copied().unwrap_or_default()).norm_sqr()).sum();
    tail + head
}

/// Draws `trials` functions `f = Σ_{j<J} a_j σ_j ψ_j` with `‖a‖ = 1` and
/// compares `‖f − Sf‖²` with `3 Σ_{j≥n} σ_j²`.
pub fn recovery_error_bound_check(op: &RecoveryOperator, trials: usize, truncation: Option<usize>, seed: u64) -> RecoveryReport {
    let j_max = truncation.unwrap_or(DEFAULT_TRUNCATION_FACTOR * op.n).min(op.spectrum.available()).max(op.n);
    let bound = 3.0 * op.tail_trace;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut worst, mut total) = (0.0f64, 0.0);
    for _ in 0..trials {
        let mut a: Vec<C64> = (0..j_max).map(|_| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)).collect();
        let norm = a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        a.iter_mut().enumerate().for_each(|(j, z)| *z *= op.spectrum.sigma(j) / norm);
        let ratio = coefficient_error(op, &a) / bound;
        worst = worst.max(ratio);
        total += ratio;
    }
    RecoveryReport {
        max_ratio: worst,
        mean_ratio: if trials > 0 { total / trials as f64 } else { 0.0 },
        trials,
        truncation: j_max,
        bound,
        splits_tie: op.splits_tie,
    }
}
