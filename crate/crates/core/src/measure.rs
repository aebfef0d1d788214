use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Where the points of a function system live.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum Domain {
    /// `𝕋ᵈ = [0,1)ᵈ` with the normalized Lebesgue measure.
    Torus { dim: usize },
    /// `𝕊² ⊂ ℝ³` with the normalized surface measure; points are unit vectors.
    Sphere,
}

impl Domain {
    /// Number of coordinates per point.
    pub fn point_dim(&self) -> usize {
        match self {
            Domain::Torus { dim } => *dim,
            Domain::Sphere => 3,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Domain::Torus { .. } => "torus",
            Domain::Sphere => "sphere",
        }
    }

    /// Draws a point from the reference probability measure.
    pub fn sample(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        match self {
            Domain::Torus { dim } => (0..*dim).map(|_| rng.random::<f64>()).collect(),
            Domain::Sphere => loop {
                // Marsaglia: uniform on the sphere via a rejection-sampled disk.
                let u: f64 = 2.0 * rng.random::<f64>() - 1.0;
                let v: f64 = 2.0 * rng.random::<f64>() - 1.0;
                let s = u * u + v * v;
                if s < 1.0 && s > 0.0 {
                    let f = 2.0 * (1.0 - s).sqrt();
                    break vec![u * f, v * f, 1.0 - 2.0 * s];
                }
            },
        }
    }

    /// Maps a point to its canonical representative: `[0,1)ᵈ` on the torus,
    /// unit norm on the sphere.
    pub fn canonicalize(&self, x: &mut [f64]) {
        match self {
            Domain::Torus { .. } => {
                for c in x.iter_mut() {
                    *c = c.rem_euclid(1.0);
                    if *c >= 1.0 {
                        *c = 0.0;
                    }
                }
            }
            Domain::Sphere => {
                let r = x.iter().map(|c| c * c).sum::<f64>().sqrt();
                if r > 0.0 {
                    for c in x.iter_mut() {
                        *c /= r;
                    }
                }
            }
        }
    }

    /// Projects an ambient gradient onto the tangent space at `x`
    /// (identity on the torus).
    pub fn project_tangent(&self, x: &[f64], grad: &mut [f64]) {
        if let Domain::Sphere = self {
            let r2: f64 = x.iter().map(|c| c * c).sum();
            if r2 > 0.0 {
                let dot: f64 = x.iter().zip(grad.iter()).map(|(a, b)| a * b).sum();
                for (g, c) in grad.iter_mut().zip(x) {
                    *g -= dot / r2 * c;
                }
            }
        }
    }

    pub fn validate_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.point_dim() {
            return Err(invalid(format!(
                "point {x:?} has {} coordinates, expected {}",
                x.len(),
                self.point_dim()
            )));
        }
        if x.iter().any(|c| !c.is_finite()) {
            return Err(invalid(format!("point {x:?} is not finite")));
        }
        if let Domain::Sphere = self {
            let r = x.iter().map(|c| c * c).sum::<f64>().sqrt();
            if (r - 1.0).abs() > 1e-8 {
                return Err(invalid(format!("sphere point {x:?} has norm {r}")));
            }
        }
        Ok(())
    }
}

/// A discrete measure `Σ wᵢ δ_{xᵢ}` with nonnegative weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteMeasure {
    pub points: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

impl DiscreteMeasure {
    pub fn new(points: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        if points.len() != weights.len() {
            return Err(invalid(format!(
                "{} points but {} weights",
                points.len(),
                weights.len()
            )));
        }
        if let Some(first) = points.first() {
            if points.iter().any(|p| p.len() != first.len()) {
                return Err(invalid("points have inconsistent dimensions"));
            }
        }
        if let Some(w) = weights.iter().find(|w| !(**w >= 0.0) || !w.is_finite()) {
            return Err(invalid(format!("weight {w} is not a finite nonnegative number")));
        }
        Ok(DiscreteMeasure { points, weights })
    }

    /// Equal weights `1/N`.
    pub fn uniform(points: Vec<Vec<f64>>) -> Self {
        let w = 1.0 / points.len().max(1) as f64;
        let weights = vec![w; points.len()];
        DiscreteMeasure { points, weights }
    }

    /// The equidistant grid `{k/s : k ∈ {0,…,s−1}ᵈ}` with equal weights.
    pub fn equidistant_grid(dim: usize, side: usize) -> Self {
        let total = side.pow(dim as u32);
        let points = (0..total)
            .map(|mut idx| {
                let mut p = vec![0.0; dim];
                for c in p.iter_mut().rev() {
                    *c = (idx % side) as f64 / side as f64;
                    idx /= side;
                }
                p
            })
            .collect();
        Self::uniform(points)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point_dim(&self) -> usize {
        self.points.first().map(|p| p.len()).unwrap_or(0)
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Restricts to the given atom indices.
    pub fn select(&self, keep: &[usize]) -> Self {
        DiscreteMeasure {
            points: keep.iter().map(|&i| self.points[i].clone()).collect(),
            weights: keep.iter().map(|&i| self.weights[i]).collect(),
        }
    }

    /// Clamps negative weights to zero and rescales to unit mass.
    pub fn normalize_probability(&mut self) {
        for w in &mut self.weights {
            if !(*w > 0.0) {
                *w = 0.0;
            }
        }
        let total = self.total_weight();
        if total > 0.0 {
            for w in &mut self.weights {
                *w /= total;
            }
        }
    }

    pub fn canonicalize(&mut self, domain: Domain) {
        for p in &mut self.points {
            domain.canonicalize(p);
        }
    }
}
