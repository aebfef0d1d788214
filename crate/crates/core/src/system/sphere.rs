use std::f64::consts::{PI, TAU};
use std::ops::{Add, Mul, Sub};

use crate::linalg::{HermitianMatrix, C64};
use crate::measure::{DiscreteMeasure, Domain};

use super::FunctionSystem;

/// A value together with its gradient in `ℝ³`.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Dual3 {
    v: f64,
    d: [f64; 3],
}

impl Dual3 {
    fn constant(v: f64) -> Self {
        Dual3 { v, d: [0.0; 3] }
    }

    fn variable(v: f64, axis: usize) -> Self {
        let mut d = [0.0; 3];
        d[axis] = 1.0;
        Dual3 { v, d }
    }

    fn scale(self, s: f64) -> Self {
        Dual3 { v: self.v * s, d: self.d.map(|c| c * s) }
    }

    fn sqrt(self) -> Self {
        let r = self.v.sqrt();
        let f = 0.5 / r;
        Dual3 { v: r, d: self.d.map(|c| c * f) }
    }

    fn recip(self) -> Self {
        let inv = 1.0 / self.v;
        let f = -inv * inv;
        Dual3 { v: inv, d: self.d.map(|c| c * f) }
    }
}

impl Add for Dual3 {
    type Output = Dual3;
    fn add(self, o: Dual3) -> Dual3 {
        Dual3 { v: self.v + o.v, d: [self.d[0] + o.d[0], self.d[1] + o.d[1], self.d[2] + o.d[2]] }
    }
}

impl Sub for Dual3 {
    type Output = Dual3;
    fn sub(self, o: Dual3) -> Dual3 {
        Dual3 { v: self.v - o.v, d: [self.d[0] - o.d[0], self.d[1] - o.d[1], self.d[2] - o.d[2]] }
    }
}

impl Mul for Dual3 {
    type Output = Dual3;
    fn mul(self, o: Dual3) -> Dual3 {
        Dual3 {
            v: self.v * o.v,
            d: [
                self.d[0] * o.v + self.v * o.d[0],
                self.d[1] * o.v + self.v * o.d[1],
                self.d[2] * o.v + self.v * o.d[2],
            ],
        }
    }
}

/// Real spherical harmonics of degree `≤ m` on `𝕊²`, orthonormal with respect
/// to the normalized surface measure.
///
/// Order: degree `l` ascending; within a degree `m = 0` first, then the
/// `(cos, sin)` pair for each `m = 1..l`. Evaluation extends each harmonic
/// 0-homogeneously off the sphere, so the ambient gradient is tangent.
#[derive(Debug, Clone)]
pub struct SphereSystem {
    degree: usize,
    norms: Vec<Vec<f64>>,
}

pub fn sphere_system(degree: usize) -> SphereSystem {
    let norms = (0..=degree)
        .map(|l| {
            (0..=l)
                .map(|m| {
                    // (l-m)!/(l+m)! as a product of reciprocals.
                    let ratio: f64 = ((l - m + 1)..=(l + m)).map(|t| 1.0 / t as f64).product();
                    let delta = if m == 0 { 1.0 } else { 2.0 };
                    ((2 * l + 1) as f64 * delta * ratio).sqrt()
                })
                .collect()
        })
        .collect();
    SphereSystem { degree, norms }
}

impl SphereSystem {
    pub fn degree(&self) -> usize {
        self.degree
    }

    /// Position of the harmonic `(l, m, sin?)` in the basis.
    pub fn position(l: usize, m: usize, sine: bool) -> usize {
        if m == 0 {
            l * l
        } else {
            l * l + 2 * m - 1 + usize::from(sine)
        }
    }

    fn eval_dual(&self, x: &[f64], out: &mut [Dual3]) {
        let xd = Dual3::variable(x[0], 0);
        let yd = Dual3::variable(x[1], 1);
        let zd = Dual3::variable(x[2], 2);
        let r2 = xd * xd + yd * yd + zd * zd;
        let inv_r = r2.sqrt().recip();
        let deg = self.degree;

        let mut inv_rl = Vec::with_capacity(deg + 1);
        inv_rl.push(Dual3::constant(1.0));
        for l in 1..=deg {
            inv_rl.push(inv_rl[l - 1] * inv_r);
        }

        // (x + iy)^m split into real and imaginary parts.
        let mut re = Dual3::constant(1.0);
        let mut im = Dual3::constant(0.0);
        let mut odd_factorial = 1.0;
        for m in 0..=deg {
            if m > 0 {
                let nre = re * xd - im * yd;
                let nim = re * yd + im * xd;
                re = nre;
                im = nim;
                odd_factorial *= (2 * m - 1) as f64;
            }
            let mut prev2 = Dual3::constant(0.0);
            let mut prev = Dual3::constant(odd_factorial);
            for l in m..=deg {
                let poly = if l == m {
                    prev
                } else if l == m + 1 {
                    let next = zd.scale((2 * m + 1) as f64) * prev;
                    prev2 = prev;
                    prev = next;
                    next
                } else {
                    let a = zd.scale((2 * l - 1) as f64) * prev;
                    let b = (r2 * prev2).scale((l + m - 1) as f64);
                    let next = (a - b).scale(1.0 / (l - m) as f64);
                    prev2 = prev;
                    prev = next;
                    next
                };
                let radial = poly * inv_rl[l];
                let nrm = self.norms[l][m];
                if m == 0 {
                    out[l * l] = radial.scale(nrm);
                } else {
                    out[Self::position(l, m, false)] = (radial * re).scale(nrm);
                    out[Self::position(l, m, true)] = (radial * im).scale(nrm);
                }
            }
        }
    }
}

impl FunctionSystem for SphereSystem {
    fn len(&self) -> usize {
        (self.degree + 1) * (self.degree + 1)
    }

    fn domain(&self) -> Domain {
        Domain::Sphere
    }

    fn eval_into(&self, x: &[f64], out: &mut [C64]) {
        let mut buf = vec![Dual3::constant(0.0); self.len()];
        self.eval_dual(x, &mut buf);
        for (o, b) in out.iter_mut().zip(&buf) {
            *o = C64::new(b.v, 0.0);
        }
    }

    fn jacobian_into(&self, x: &[f64], values: &mut [C64], jac: &mut [C64]) {
        let mut buf = vec![Dual3::constant(0.0); self.len()];
        self.eval_dual(x, &mut buf);
        for (k, b) in buf.iter().enumerate() {
            values[k] = C64::new(b.v, 0.0);
            for j in 0..3 {
                jac[k * 3 + j] = C64::new(b.d[j], 0.0);
            }
        }
    }

    fn exact_gram(&self) -> Option<HermitianMatrix> {
        Some(HermitianMatrix::identity(self.len()))
    }

    fn integrals(&self) -> Option<Vec<C64>> {
        let mut v = vec![C64::new(0.0, 0.0); self.len()];
        v[0] = C64::new(1.0, 0.0);
        Some(v)
    }

    fn reference_rule(&self, product_order: usize) -> Option<DiscreteMeasure> {
        Some(sphere_product_rule(2 * product_order.max(1) * self.degree))
    }
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`, weights summing to 2.
pub fn gauss_legendre(count: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; count];
    let mut weights = vec![0.0; count];
    let n = count as f64;
    for i in 0..count.div_ceil(2) {
        let mut t = (PI * (i as f64 + 0.75) / (n + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(count, t);
            dp = d;
            let step = p / d;
            t -= step;
            if step.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(count, t);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - t * t) * dp * dp);
        nodes[i] = -t;
        nodes[count - 1 - i] = t;
        weights[i] = w;
        weights[count - 1 - i] = w;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, t: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = t;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * t * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (t * p1 - p0) / (t * t - 1.0);
    (p1, d)
}

/// Product rule (Gauss-Legendre in `z`, equispaced in azimuth) integrating
/// every polynomial of total degree `≤ degree` exactly, as a probability measure.
pub fn sphere_product_rule(degree: usize) -> DiscreteMeasure {
    let nz = degree / 2 + 1;
    let nphi = degree + 1;
    let (zs, wz) = gauss_legendre(nz);
    let mut points = Vec::with_capacity(nz * nphi);
    let mut weights = Vec::with_capacity(nz * nphi);
    for (z, w) in zs.iter().zip(&wz) {
        let rho = (1.0 - z * z).max(0.0).sqrt();
        for j in 0..nphi {
            let phi = TAU * j as f64 / nphi as f64;
            points.push(vec![rho * phi.cos(), rho * phi.sin(), *z]);
            weights.push(w / (2.0 * nphi as f64));
        }
    }
    DiscreteMeasure { points, weights }
}

/// `∫ x^a y^b z^c dμ` for the normalized surface measure on `𝕊²`.
pub fn sphere_monomial_integral(a: u32, b: u32, c: u32) -> f64 {
    if a % 2 == 1 || b % 2 == 1 || c % 2 == 1 {
        return 0.0;
    }
    let dfact = |n: i64| -> f64 {
        let mut acc = 1.0;
        let mut k = n;
        while k > 1 {
            acc *= k as f64;
            k -= 2;
        }
        acc
    };
    dfact(a as i64 - 1) * dfact(b as i64 - 1) * dfact(c as i64 - 1) / dfact((a + b + c) as i64 + 1)
}
