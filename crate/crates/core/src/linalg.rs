//! Dense complex Hermitian linear algebra.
//!
//! Every spectral quantity (determinant, spectral distance, inverse square
//! root) goes through a single Hermitian eigendecomposition.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex;

use crate::error::{invalid, Error, Result};

pub type C64 = Complex<f64>;

/// Eigenvalues below this absolute value are treated as rounding noise when
/// checking positive semi-definiteness.
pub const PSD_TOLERANCE: f64 = 1e-10;

/// Eigenvalues below this are treated as exact zeros by [`HermitianMatrix::log_det`].
pub const LOG_DET_FLOOR: f64 = 1e-300;

/// Default lower eigenvalue bound accepted by [`HermitianMatrix::inverse_sqrt`].
pub const DEFAULT_INVERSE_SQRT_EPS: f64 = 1e-10;

const HERMITIAN_TOLERANCE: f64 = 1e-12;

/// A dense complex Hermitian matrix. Construction symmetrizes the input.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianMatrix {
    data: DMatrix<C64>,
}

/// Eigendecomposition `A = U diag(λ) U*` with ascending eigenvalues.
#[derive(Debug, Clone)]
pub struct Eigh {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: DMatrix<C64>,
}

impl Eigh {
    /// `U diag(f(λ)) U*`.
    pub fn map_spectrum(&self, f: impl Fn(f64) -> f64) -> DMatrix<C64> {
        let n = self.eigenvalues.len();
        let mut scaled = self.eigenvectors.clone();
        for (j, &lambda) in self.eigenvalues.iter().enumerate() {
            let s = f(lambda);
            for i in 0..n {
                scaled[(i, j)] *= s;
            }
        }
        &scaled * self.eigenvectors.adjoint()
    }
}

impl HermitianMatrix {
    /// Validates and symmetrizes `m` via `(m + m*) / 2`.
    ///
    /// Rejects non-square input, non-finite entries and matrices whose
    /// anti-Hermitian part exceeds `1e-12 (1 + max |m_kl|)`.
    pub fn new(m: DMatrix<C64>) -> Result<Self> {
        if m.nrows() != m.ncols() || m.nrows() == 0 {
            return Err(invalid(format!(
                "Hermitian matrix must be square and non-empty, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(invalid("matrix has non-finite entries"));
        }
        let scale = m.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let n = m.nrows();
        for k in 0..n {
            for l in k..n {
                let dev = (m[(k, l)] - m[(l, k)].conj()).norm();
                if dev > HERMITIAN_TOLERANCE * (1.0 + scale) {
                    return Err(invalid(format!(
                        "matrix is not Hermitian: |A[{k},{l}] - conj(A[{l},{k}])| = {dev:e}"
                    )));
                }
            }
        }
        Ok(Self::symmetrized(m))
    }

    /// Symmetrizes without the Hermitian-deviation check. Used for sums of
    /// rank-one terms where the input is Hermitian up to rounding.
    pub(crate) fn symmetrized(mut m: DMatrix<C64>) -> Self {
        let n = m.nrows();
        for k in 0..n {
            m[(k, k)] = C64::new(m[(k, k)].re, 0.0);
            for l in (k + 1)..n {
                let avg = (m[(k, l)] + m[(l, k)].conj()) * 0.5;
                m[(k, l)] = avg;
                m[(l, k)] = avg.conj();
            }
        }
        HermitianMatrix { data: m }
    }

    pub fn identity(n: usize) -> Self {
        HermitianMatrix {
            data: DMatrix::identity(n, n),
        }
    }

    pub fn zeros(n: usize) -> Self {
        HermitianMatrix {
            data: DMatrix::zeros(n, n),
        }
    }

    pub fn from_real_diagonal(diag: &[f64]) -> Self {
        let v = DVector::from_iterator(diag.len(), diag.iter().map(|&d| C64::new(d, 0.0)));
        HermitianMatrix {
            data: DMatrix::from_diagonal(&v),
        }
    }

    /// `v v*`.
    pub fn rank_one(v: &[C64]) -> Self {
        let mut m = DMatrix::zeros(v.len(), v.len());
        add_rank_one(&mut m, 1.0, v);
        Self::symmetrized(m)
    }

    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.data
    }

    pub fn into_inner(self) -> DMatrix<C64> {
        self.data
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim()).map(|k| self.data[(k, k)].re).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// `‖A − I‖_F²`.
    pub fn frobenius_distance_to_identity_sq(&self) -> f64 {
        let n = self.dim();
        let mut acc = 0.0;
        for k in 0..n {
            for l in 0..n {
                let mut z = self.data[(k, l)];
                if k == l {
                    z -= C64::new(1.0, 0.0);
                }
                acc += z.norm_sqr();
            }
        }
        acc
    }

    /// Hermitian eigendecomposition with eigenvalues sorted ascending.
    pub fn eigh(&self) -> Result<Eigh> {
        if self
            .data
            .iter()
            .any(|z| !z.re.is_finite() || !z.im.is_finite())
        {
            return Err(invalid("matrix has non-finite entries"));
        }
        let eig = self.data.clone().symmetric_eigen();
        let n = self.dim();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let eigenvalues = order.iter().map(|&i| eig.eigenvalues[i]).collect();
        let mut eigenvectors = DMatrix::zeros(n, n);
        for (dst, &src) in order.iter().enumerate() {
            eigenvectors.set_column(dst, &eig.eigenvectors.column(src));
        }
        Ok(Eigh {
            eigenvalues,
            eigenvectors,
        })
    }

    pub fn eigenvalues(&self) -> Result<Vec<f64>> {
        Ok(self.eigh()?.eigenvalues)
    }

    /// `‖A − I‖_{2→2} = max_k |λ_k − 1|`.
    pub fn spectral_distance_to_identity(&self) -> Result<f64> {
        let ev = self.eigenvalues()?;
        Ok(ev.iter().map(|l| (l - 1.0).abs()).fold(0.0, f64::max))
    }

    /// `Σ log λ_k`; returns `-∞` when some eigenvalue is below
    /// [`LOG_DET_FLOOR`].
    pub fn log_det(&self) -> Result<f64> {
        let ev = self.eigenvalues()?;
        let min = ev.first().copied().unwrap_or(0.0);
        if min < -PSD_TOLERANCE {
            return Err(Error::NotPsd { min_eigenvalue: min });
        }
        if min < LOG_DET_FLOOR {
            return Ok(f64::NEG_INFINITY);
        }
        Ok(ev.iter().map(|l| l.ln()).sum())
    }

    /// `A^{-1/2}`; fails if the smallest eigenvalue is below `eps`.
    pub fn inverse_sqrt(&self, eps: f64) -> Result<HermitianMatrix> {
        let eig = self.eigh()?;
        let min = eig.eigenvalues[0];
        if min < eps {
            return Err(Error::IllConditioned {
                min_eigenvalue: min,
                threshold: eps,
            });
        }
        Ok(Self::symmetrized(eig.map_spectrum(|l| 1.0 / l.sqrt())))
    }

    /// `B A B` for Hermitian `B`.
    pub fn congruence(&self, b: &HermitianMatrix) -> HermitianMatrix {
        Self::symmetrized(&b.data * &self.data * &b.data)
    }

    /// `v* A v` (real for Hermitian `A`).
    pub fn quadratic_form(&self, v: &[C64]) -> f64 {
        let n = self.dim();
        let mut acc = C64::new(0.0, 0.0);
        for k in 0..n {
            let mut row = C64::new(0.0, 0.0);
            for l in 0..n {
                row += self.data[(k, l)] * v[l];
            }
            acc += v[k].conj() * row;
        }
        acc.re
    }

    pub fn mul_vec(&self, v: &[C64]) -> Vec<C64> {
        mat_vec(&self.data, v)
    }
}

/// `m += w v v*` (both triangles).
pub fn add_rank_one(m: &mut DMatrix<C64>, w: f64, v: &[C64]) {
    let n = v.len();
    for l in 0..n {
        let cl = v[l].conj() * w;
        for k in 0..n {
            m[(k, l)] += v[k] * cl;
        }
    }
}

pub fn mat_vec(m: &DMatrix<C64>, v: &[C64]) -> Vec<C64> {
    let mut out = vec![C64::new(0.0, 0.0); m.nrows()];
    for l in 0..m.ncols() {
        let vl = v[l];
        for (k, o) in out.iter_mut().enumerate() {
            *o += m[(k, l)] * vl;
        }
    }
    out
}

/// `u* v`.
pub fn inner(u: &[C64], v: &[C64]) -> C64 {
    u.iter().zip(v).map(|(a, b)| a.conj() * b).sum()
}

pub fn norm_sqr(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum()
}

/// Null vector of a real `rows × cols` matrix with `cols > rank`, from the
/// right singular vector of the smallest singular value. The matrix is
/// zero-padded to square so the full right basis is available.
pub fn real_null_vector(m: &DMatrix<f64>) -> Option<(DVector<f64>, f64)> {
    let cols = m.ncols();
    if cols == 0 {
        return None;
    }
    let size = m.nrows().max(cols);
    let mut padded = DMatrix::zeros(size, cols);
    padded.view_mut((0, 0), (m.nrows(), cols)).copy_from(m);
    let svd = padded.svd(false, true);
    let v_t = svd.v_t?;
    let (idx, smin) = svd
        .singular_values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, s)| (i, *s))?;
    Some((v_t.row(idx).transpose(), smin))
}
