//! Finite frequency sets `I ⊂ ℤᵈ` and their difference and sum sets.

use std::collections::BTreeSet;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// A non-empty list of distinct integer frequency vectors of common length.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<i64>>", into = "Vec<Vec<i64>>")]
pub struct MultiIndexSet {
    dim: usize,
    indices: Vec<Vec<i64>>,
}

impl TryFrom<Vec<Vec<i64>>> for MultiIndexSet {
    type Error = Error;

    fn try_from(indices: Vec<Vec<i64>>) -> Result<Self> {
        MultiIndexSet::new(indices)
    }
}

impl From<MultiIndexSet> for Vec<Vec<i64>> {
    fn from(set: MultiIndexSet) -> Self {
        set.indices
    }
}

/// Frequencies in the 2-D "bad" set of the first experiment. Their minimal
/// reconstructing rank-1 lattice has 113 points while `|D(I)| = 91`.
pub const EXP1_BAD_FREQUENCIES: [[i64; 2]; 10] = [
    [0, 0],
    [2_671_704, 2_671_704],
    [-3_111_990, 3_111_990],
    [-4_145_974, -4_145_974],
    [4_520_742, -4_520_742],
    [-5_553_600, -5_553_600],
    [-6_867_835, 6_867_835],
    [18_119_640, 18_119_640],
    [39_011_940, -39_011_940],
    [-39_021_892, 39_021_892],
];

/// The 1-D frequency set of the sharpness experiment (`|D(I)| = 91`).
pub const EXP3_BAD_FREQUENCIES: [i64; 10] = [
    0, 107_062, 124_928, 1_033_760, 1_414_818, 2_142_995, 2_820_145, 4_210_229, 4_645_143,
    5_264_579,
];

impl MultiIndexSet {
    pub fn new(indices: Vec<Vec<i64>>) -> Result<Self> {
        let first = indices
            .first()
            .ok_or_else(|| invalid("index set must contain at least one frequency"))?;
        let dim = first.len();
        if dim == 0 {
            return Err(invalid("frequencies must have dimension >= 1"));
        }
        let mut seen = BTreeSet::new();
        for k in &indices {
            if k.len() != dim {
                return Err(invalid(format!(
                    "frequency {k:?} has dimension {} but expected {dim}",
                    k.len()
                )));
            }
            if !seen.insert(k.clone()) {
                return Err(invalid(format!("duplicate frequency {k:?}")));
            }
        }
        Ok(MultiIndexSet { dim, indices })
    }

    /// Builds a set from possibly repeated frequencies, keeping the first
    /// occurrence of each.
    pub fn from_dedup(indices: impl IntoIterator<Item = Vec<i64>>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        let kept: Vec<Vec<i64>> = indices
            .into_iter()
            .filter(|k| seen.insert(k.clone()))
            .collect();
        Self::new(kept)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn indices(&self) -> &[Vec<i64>] {
        &self.indices
    }

    pub fn iter(&self) -> impl Iterator<Item = &[i64]> {
        self.indices.iter().map(|k| k.as_slice())
    }

    pub fn contains(&self, k: &[i64]) -> bool {
        self.indices.iter().any(|x| x == k)
    }

    pub fn contains_zero(&self) -> bool {
        self.indices.iter().any(|k| k.iter().all(|&c| c == 0))
    }

    /// Largest `|k_j|` per coordinate.
    pub fn max_abs_per_coordinate(&self) -> Vec<i64> {
        (0..self.dim)
            .map(|j| self.indices.iter().map(|k| k[j].abs()).max().unwrap_or(0))
            .collect()
    }

    /// `{k : ‖k‖₁ ≤ r}`.
    pub fn l1_ball(dim: usize, radius: i64) -> Result<Self> {
        Self::from_box_filter(dim, radius, |k| k.iter().map(|c| c.abs()).sum::<i64>() <= radius)
    }

    /// Hyperbolic cross `{k : Π (|k_j| + 1) ≤ t}`.
    pub fn hyperbolic_cross(dim: usize, t: i64) -> Result<Self> {
        if t < 1 {
            return Err(invalid("hyperbolic cross parameter must be >= 1"));
        }
        Self::from_box_filter(dim, t - 1, |k| {
            k.iter().map(|c| c.abs() + 1).product::<i64>() <= t
        })
    }

    /// Half-open cube `{−r, …, r−1}ᵈ` with `(2r)ᵈ` frequencies.
    pub fn cube(dim: usize, r: i64) -> Result<Self> {
        if r < 1 {
            return Err(invalid("cube radius must be >= 1"));
        }
        Self::from_box_filter(dim, r, |k| k.iter().all(|&c| c < r))
    }

    /// `count` distinct uniform frequencies from `{−bound, …, bound}ᵈ`.
    pub fn random(dim: usize, count: usize, bound: i64, seed: u64) -> Result<Self> {
        let side = (2 * bound + 1) as f64;
        if (count as f64) > side.powi(dim as i32) {
            return Err(invalid("not enough frequencies in the box"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut seen = BTreeSet::new();
        let mut out = Vec::with_capacity(count);
        while out.len() < count {
            let k: Vec<i64> = (0..dim).map(|_| rng.random_range(-bound..=bound)).collect();
            if seen.insert(k.clone()) {
                out.push(k);
            }
        }
        Self::new(out)
    }

    pub fn exp1_bad() -> Self {
        Self::new(EXP1_BAD_FREQUENCIES.iter().map(|k| k.to_vec()).collect())
            .expect("constant set is valid")
    }

    pub fn exp3_bad() -> Self {
        Self::new(EXP3_BAD_FREQUENCIES.iter().map(|&k| vec![k]).collect())
            .expect("constant set is valid")
    }

    fn from_box_filter(dim: usize, radius: i64, keep: impl Fn(&[i64]) -> bool) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("dimension must be >= 1"));
        }
        if radius < 0 {
            return Err(invalid("radius must be >= 0"));
        }
        let mut out = Vec::new();
        let mut k = vec![-radius; dim];
        loop {
            if keep(&k) {
                out.push(k.clone());
            }
            let mut j = dim;
            loop {
                if j == 0 {
                    return Self::new(out);
                }
                j -= 1;
                if k[j] < radius {
                    k[j] += 1;
                    break;
                }
                k[j] = -radius;
            }
        }
    }

    /// `D(I) = {k − l : k, l ∈ I}`, sorted lexicographically.
    pub fn difference_set(&self) -> MultiIndexSet {
        let mut set = BTreeSet::new();
        for k in &self.indices {
            for l in &self.indices {
                set.insert(k.iter().zip(l).map(|(a, b)| a - b).collect::<Vec<i64>>());
            }
        }
        let n = self.len();
        assert!(set.len() <= n * n - n + 1, "difference set exceeds |I|² − |I| + 1");
        MultiIndexSet {
            dim: self.dim,
            indices: set.into_iter().collect(),
        }
    }

    /// `times`-fold sum set `I + … + I`, sorted lexicographically.
    pub fn sumset(&self, times: usize) -> Result<MultiIndexSet> {
        if times == 0 {
            return Err(invalid("sumset multiplicity must be >= 1"));
        }
        let mut current: BTreeSet<Vec<i64>> = self.indices.iter().cloned().collect();
        for _ in 1..times {
            let mut next = BTreeSet::new();
            for a in &current {
                for k in &self.indices {
                    next.insert(a.iter().zip(k).map(|(x, y)| x + y).collect::<Vec<i64>>());
                }
            }
            current = next;
        }
        Ok(MultiIndexSet {
            dim: self.dim,
            indices: current.into_iter().collect(),
        })
    }

    /// Parses a family specification:
    /// `l1ball:d:r`, `hyperbolic:d:t`, `cube:d:r`, `random:d:count:bound:seed`,
    /// `exp1-i3`, `exp3-1d`, or `explicit:path` / `file:path` (JSON array of
    /// integer vectors).
    pub fn parse_spec(spec: &str) -> Result<Self> {
        let parts: Vec<&str> = spec.split(':').collect();
        let num = |i: usize| -> Result<i64> {
            parts
                .get(i)
                .ok_or_else(|| invalid(format!("index spec `{spec}` is missing field {i}")))?
                .trim()
                .parse::<i64>()
                .map_err(|e| invalid(format!("index spec `{spec}` field {i}: {e}")))
        };
        let dim = |i: usize| -> Result<usize> {
            let d = num(i)?;
            if d < 1 {
                return Err(invalid("dimension must be >= 1"));
            }
            Ok(d as usize)
        };
        match parts[0] {
            "l1ball" => Self::l1_ball(dim(1)?, num(2)?),
            "hyperbolic" => Self::hyperbolic_cross(dim(1)?, num(2)?),
            "cube" => Self::cube(dim(1)?, num(2)?),
            "random" => Self::random(dim(1)?, num(2)? as usize, num(3)?, num(4)? as u64),
            "exp1-i3" => Ok(Self::exp1_bad()),
            "exp3-1d" => Ok(Self::exp3_bad()),
            "explicit" | "file" => {
                let path = spec.split_once(':').map(|x| x.1).unwrap_or("");
                Self::read_json(Path::new(path))
            }
            other => Err(invalid(format!("unknown index family `{other}`"))),
        }
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            context: format!("reading index set {}", path.display()),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: Vec<Vec<i64>> = serde_json::from_str(text).map_err(|e| Error::Parse {
            what: "index set".into(),
            message: format!("line {} column {}: {e}", e.line(), e.column()),
        })?;
        Self::new(raw)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.indices).expect("integer vectors serialize")
    }
}
