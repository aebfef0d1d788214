//! Truncated Mercer decompositions `k(x,y) = Σ σ_j² ψ_j(x) ψ̄_j(y)`.

use std::f64::consts::TAU;
use std::fmt::Debug;

use crate::error::{invalid, Result};
use crate::linalg::C64;
use crate::measure::Domain;
use crate::system::{trig_phase, SharedSystem};

pub trait MercerSpectrum: Send + Sync + Debug {
    fn domain(&self) -> Domain;

    fn point_dim(&self) -> usize {
        self.domain().point_dim()
    }

    /// Number of eigenpairs that can be evaluated.
    fn available(&self) -> usize;

    /// `σ_j` (0-based), nonincreasing in `j`.
    fn sigma(&self, j: usize) -> f64;

    /// Writes `ψ_0(x), …, ψ_{out.len()-1}(x)`.
    fn eigenfunctions_into(&self, x: &[f64], out: &mut [C64]);

    /// Values and row-major Jacobian of the first `values.len()` eigenfunctions.
    fn eigenfunction_jacobian_into(&self, x: &[f64], values: &mut [C64], jac: &mut [C64]);

    /// `Σ_{j ≥ n} σ_j²`.
    fn tail_trace(&self, n: usize) -> f64;

    /// `Σ_{j ≥ n} σ_j² |ψ_j(x)|²`.
    fn tail_density(&self, x: &[f64], n: usize) -> f64;

    /// Gradient of [`MercerSpectrum::tail_density`] in `x`.
    fn tail_density_gradient(&self, x: &[f64], n: usize, grad: &mut [f64]);

    fn eigenfunctions(&self, x: &[f64], count: usize) -> Vec<C64> {
        let mut out = vec![C64::new(0.0, 0.0); count];
        self.eigenfunctions_into(x, &mut out);
        out
    }

    /// Whether truncating after `n` eigenpairs splits a group of equal `σ`.
    fn splits_tie(&self, n: usize) -> bool {
        n > 0 && n < self.available() && self.sigma(n - 1) == self.sigma(n)
    }
}

/// Periodic Sobolev kernel on `𝕋ᵈ`: `σ_k = (1 + ‖k‖₁)^{-s}`, `ψ_k = e^{2πi⟨k,·⟩}`.
///
/// Frequencies are ordered by `‖k‖₁`, ties broken lexicographically.
#[derive(Debug, Clone)]
pub struct SobolevTorusSpectrum {
    dim: usize,
    smoothness: f64,
    frequencies: Vec<Vec<i64>>,
    norms: Vec<i64>,
}

impl SobolevTorusSpectrum {
    /// Precomputes complete `ℓ₁` shells until at least `capacity` frequencies exist.
    pub fn new(dim: usize, smoothness: f64, capacity: usize) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("dimension must be positive"));
        }
        if !(2.0 * smoothness > dim as f64) {
            return Err(invalid(format!(
                "trace condition requires 2s > d (s = {smoothness}, d = {dim})"
            )));
        }
        let mut frequencies = Vec::new();
        let mut norms = Vec::new();
        let mut r = 0i64;
        while frequencies.len() < capacity.max(1) {
            let mut shell = l1_sphere(dim, r);
            shell.sort();
            norms.extend(std::iter::repeat_n(r, shell.len()));
            frequencies.extend(shell);
            r += 1;
        }
        Ok(SobolevTorusSpectrum { dim, smoothness, frequencies, norms })
    }

    pub fn smoothness(&self) -> f64 {
        self.smoothness
    }

    pub fn frequency(&self, j: usize) -> &[i64] {
        &self.frequencies[j]
    }

    pub fn frequencies(&self, count: usize) -> &[Vec<i64>] {
        &self.frequencies[..count]
    }

    fn sigma_sq_of_norm(&self, r: i64) -> f64 {
        (1.0 + r as f64).powf(-2.0 * self.smoothness)
    }

    /// `Σ_{‖k‖₁ > r} σ_k²` in closed form.
    fn shells_beyond(&self, r: i64) -> f64 {
        // Shell sizes c_d(ρ) = Σ_i 2^i C(d,i) C(ρ-1,i-1) form a polynomial
        // in ρ; writing it in u = ρ + 1 turns the tail into Hurwitz zetas.
        let d = self.dim;
        let mut poly = vec![0.0; d];
        for i in 1..=d {
            // C(ρ-1, i-1) = Π_{t=1}^{i-1} (ρ - t)/(i-1)! with ρ = u - 1.
            let mut term = vec![1.0];
            for t in 1..i {
                let shift = -(1.0 + t as f64);
                let mut next = vec![0.0; term.len() + 1];
                for (p, c) in term.iter().enumerate() {
                    next[p + 1] += c;
                    next[p] += c * shift;
                }
                term = next;
            }
            let scale = 2f64.powi(i as i32) * binomial(d, i) / factorial(i - 1);
            for (p, c) in term.iter().enumerate() {
                poly[p] += scale * c;
            }
        }
        let t = 2.0 * self.smoothness;
        let start = (r + 2) as f64;
        poly.iter().enumerate().map(|(p, c)| c * hurwitz_zeta(t - p as f64, start)).sum()
    }
}

impl MercerSpectrum for SobolevTorusSpectrum {
    fn domain(&self) -> Domain {
        Domain::Torus { dim: self.dim }
    }

    fn available(&self) -> usize {
        self.frequencies.len()
    }

    fn sigma(&self, j: usize) -> f64 {
        (1.0 + self.norms[j] as f64).powf(-self.smoothness)
    }

    fn eigenfunctions_into(&self, x: &[f64], out: &mut [C64]) {
        for (o, k) in out.iter_mut().zip(&self.frequencies) {
            let (s, c) = (TAU * trig_phase(k, x)).sin_cos();
            *o = C64::new(c, s);
        }
    }

    fn eigenfunction_jacobian_into(&self, x: &[f64], values: &mut [C64], jac: &mut [C64]) {
        self.eigenfunctions_into(x, values);
        let d = self.dim;
        for (row, v) in values.iter().enumerate() {
            let iv = C64::new(0.0, TAU) * v;
            for j in 0..d {
                jac[row * d + j] = iv * self.frequencies[row][j] as f64;
            }
        }
    }

    fn tail_trace(&self, n: usize) -> f64 {
        if n == 0 {
            // The shell-size polynomial is only valid for ρ ≥ 1.
            return 1.0 + self.shells_beyond(0);
        }
        let last_shell = self.norms[n - 1];
        let partial: f64 = (n..self.frequencies.len())
            .take_while(|&j| self.norms[j] == last_shell)
            .map(|j| self.sigma_sq_of_norm(self.norms[j]))
            .sum();
        partial + self.shells_beyond(last_shell)
    }

    fn tail_density(&self, _x: &[f64], n: usize) -> f64 {
        self.tail_trace(n)
    }

    fn tail_density_gradient(&self, _x: &[f64], _n: usize, grad: &mut [f64]) {
        grad.iter_mut().for_each(|g| *g = 0.0);
    }
}

/// A finite orthonormal system with prescribed singular values.
#[derive(Debug, Clone)]
pub struct FiniteSpectrum {
    system: SharedSystem,
    sigmas: Vec<f64>,
}

impl FiniteSpectrum {
    pub fn new(system: SharedSystem, sigmas: Vec<f64>) -> Result<Self> {
        if sigmas.len() != system.len() {
            return Err(invalid(format!("{} sigmas for {} functions", sigmas.len(), system.len())));
        }
        if sigmas.windows(2).any(|w| w[1] > w[0]) || sigmas.iter().any(|s| !(*s > 0.0)) {
            return Err(invalid("sigmas must be positive and nonincreasing"));
        }
        Ok(FiniteSpectrum { system, sigmas })
    }
}

impl MercerSpectrum for FiniteSpectrum {
    fn domain(&self) -> Domain {
        self.system.domain()
    }

    fn available(&self) -> usize {
        self.sigmas.len()
    }

    fn sigma(&self, j: usize) -> f64 {
        self.sigmas[j]
    }

    fn eigenfunctions_into(&self, x: &[f64], out: &mut [C64]) {
        let v = self.system.eval(x);
        out.copy_from_slice(&v[..out.len()]);
    }

    fn eigenfunction_jacobian_into(&self, x: &[f64], values: &mut [C64], jac: &mut [C64]) {
        let d = self.point_dim();
        let (v, j) = self.system.jacobian(x);
        values.copy_from_slice(&v[..values.len()]);
        jac.copy_from_slice(&j[..values.len() * d]);
    }

    fn tail_trace(&self, n: usize) -> f64 {
        self.sigmas.iter().skip(n).map(|s| s * s).sum()
    }

    fn tail_density(&self, x: &[f64], n: usize) -> f64 {
        let v = self.system.eval(x);
        v.iter().zip(&self.sigmas).skip(n).map(|(z, s)| s * s * z.norm_sqr()).sum()
    }

    fn tail_density_gradient(&self, x: &[f64], n: usize, grad: &mut [f64]) {
        let d = self.point_dim();
        let (v, jac) = self.system.jacobian(x);
        grad.iter_mut().for_each(|g| *g = 0.0);
        for k in n..v.len() {
            let s2 = self.sigmas[k] * self.sigmas[k];
            for (j, g) in grad.iter_mut().enumerate() {
                *g += 2.0 * s2 * (v[k].conj() * jac[k * d + j]).re;
            }
        }
    }
}

/// Integer vectors with `‖k‖₁ = r`.
fn l1_sphere(dim: usize, r: i64) -> Vec<Vec<i64>> {
    if dim == 1 {
        return if r == 0 { vec![vec![0]] } else { vec![vec![-r], vec![r]] };
    }
    let mut out = Vec::new();
    for first in -r..=r {
        for mut rest in l1_sphere(dim - 1, r - first.abs()) {
            rest.insert(0, first);
            out.push(rest);
        }
    }
    out
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).map(|i| (n - i) as f64 / (i + 1) as f64).product()
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|i| i as f64).product()
}

/// `ζ(t, q) = Σ_{u ≥ 0} (u + q)^{-t}` for `t > 1`, `q > 0`, via Euler-Maclaurin.
pub fn hurwitz_zeta(t: f64, q: f64) -> f64 {
    const B2K: [f64; 8] = [
        1.0 / 6.0,
        -1.0 / 30.0,
        1.0 / 42.0,
        -1.0 / 30.0,
        5.0 / 66.0,
        -691.0 / 2730.0,
        7.0 / 6.0,
        -3617.0 / 510.0,
    ];
    const HEAD: usize = 16;
    let head: f64 = (0..HEAD).map(|u| (q + u as f64).powf(-t)).sum();
    let a = q + HEAD as f64;
    let mut sum = head + a.powf(1.0 - t) / (t - 1.0) + 0.5 * a.powf(-t);
    // Rising factorial t(t+1)…(t+2k-2) and factorial (2k)! build up together.
    let mut rising = t;
    let mut fact = 2.0;
    let mut power = a.powf(-t - 1.0);
    for (k, b) in B2K.iter().enumerate() {
        sum += b / fact * rising * power;
        let k2 = 2.0 * (k + 1) as f64;
        rising *= (t + k2 - 1.0) * (t + k2);
        fact *= (k2 + 1.0) * (k2 + 2.0);
        power /= a * a;
    }
    sum
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute_tail(spec: &SobolevTorusSpectrum, n: usize, extra_radius: i64) -> f64 {
        let mut total = 0.0;
        let start = spec.available();
        for j in n..start {
            total += spec.sigma(j).powi(2);
        }
        let r0 = spec.norms[start - 1] + 1;
        for r in r0..r0 + extra_radius {
            total += l1_count(spec.dim, r) as f64 * spec.sigma_sq_of_norm(r);
        }
        total
    }

    fn l1_count(dim: usize, r: i64) -> u64 {
        if dim == 1 {
            return if r == 0 { 1 } else { 2 };
        }
        (-r..=r).map(|first| l1_count(dim - 1, r - first.abs())).sum()
    }

    #[test]
    fn zeta_values() {
        let z2 = hurwitz_zeta(2.0, 1.0);
        assert!((z2 - std::f64::consts::PI.powi(2) / 6.0).abs() < 1e-15);
        let z4 = hurwitz_zeta(4.0, 1.0);
        assert!((z4 - std::f64::consts::PI.powi(4) / 90.0).abs() < 1e-15);
        // ζ(3, 2) = ζ(3) - 1
        assert!((hurwitz_zeta(3.0, 2.0) - 0.202_056_903_159_594_3).abs() < 1e-15);
    }

    #[test]
    fn shell_counts() {
        assert_eq!(l1_sphere(2, 0).len(), 1);
        assert_eq!(l1_sphere(2, 3).len(), 12);
        assert_eq!(l1_sphere(3, 2).len(), 18);
    }

    #[test]
    fn ordering_and_sigmas() {
        let s = SobolevTorusSpectrum::new(1, 2.0, 8).unwrap();
        assert_eq!(s.frequency(0), &[0]);
        assert_eq!(s.frequency(1), &[-1]);
        assert_eq!(s.frequency(2), &[1]);
        assert!((s.sigma(2) - 0.25).abs() < 1e-16);
        assert!(s.splits_tie(8));
        assert!(!s.splits_tie(7));
    }

    #[test]
    fn closed_form_tail_matches_summation() {
        for (d, sm) in [(1usize, 2.0), (2, 2.5), (3, 3.0)] {
            let s = SobolevTorusSpectrum::new(d, sm, 30).unwrap();
            for n in [0, 1, 5, 8, 20] {
                let exact = s.tail_trace(n);
                // Direct summation converges slowly; compare against a long
                // partial sum plus an integral bound on the remainder.
                let partial = brute_tail(&s, n, 300);
                // c_d(r) ≤ 2^d (r+1)^{d-1} bounds the omitted shells by an integral.
                let big_r = (s.norms[s.available() - 1] + 301) as f64;
                let remainder = 2f64.powi(d as i32) * big_r.powf(d as f64 - 2.0 * sm) / (2.0 * sm - d as f64);
                assert!(exact >= partial - 1e-12);
                assert!(exact - partial <= remainder + 1e-14, "d={d} s={sm} n={n}: {exact} vs {partial}");
            }
        }
        // d = 1, s = 2: tail after 0 is 1 + 2(ζ(4) - 1) - 1.
        let s = SobolevTorusSpectrum::new(1, 2.0, 3).unwrap();
        let z4 = std::f64::consts::PI.powi(4) / 90.0;
        assert!((s.tail_trace(1) - 2.0 * (z4 - 1.0)).abs() < 1e-15);
        assert!((s.tail_trace(3) - 2.0 * (z4 - 1.0 - 1.0 / 16.0)).abs() < 1e-15);
        // d = 2, s = 3/2: c_2(r) = 4r, so the full trace is 1 + 4(ζ(2) - ζ(3)).
        let s = SobolevTorusSpectrum::new(2, 1.5, 1).unwrap();
        let expected = 1.0 + 4.0 * (1.644_934_066_848_226_4 - 1.202_056_903_159_594_2);
        assert!((s.tail_trace(0) - expected).abs() < 1e-14);
    }

    #[test]
    fn rejects_nontrace_class() {
        assert!(SobolevTorusSpectrum::new(2, 1.0, 5).is_err());
    }
}
