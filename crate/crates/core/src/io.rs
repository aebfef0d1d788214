//! JSON and CSV files for designs, frames and recovery operators.

use std::path::Path;
use std::sync::Arc;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::design::{mz_constant, DEFAULT_EPS_TARGET};
use crate::error::{invalid, Error, Result};
use crate::frames::{Certificate, EntfResult};
use crate::linalg::{HermitianMatrix, C64};
use crate::measure::{DiscreteMeasure, Domain};
use crate::quadrature::{lift_system, orthonormalize, quadrature_error, DesignKind, MzDesign, TargetSpace, DEFAULT_LIFT_CAP};
use crate::recovery::{assemble, RecoveryOperator};
use crate::spectrum::{MercerSpectrum, SobolevTorusSpectrum};
use crate::system::{sphere_system, SharedSystem, TrigSystem};

pub const DESIGN_SCHEMA: &str = "mzdesign/1";
pub const FRAME_SCHEMA: &str = "mzframe/1";
pub const OPERATOR_SCHEMA: &str = "mzrecovery/1";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Meta {
    pub seed: u64,
    pub restarts: usize,
    pub iterations: usize,
    pub tool_version: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps_target: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl Meta {
    pub fn new(seed: u64, restarts: usize, iterations: usize) -> Self {
        Meta { seed, restarts, iterations, tool_version: TOOL_VERSION.to_string(), eps_target: None, warnings: Vec::new() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum RuleKind {
    #[default]
    Mz,
    /// `p` is 1 and `mz_constant` is the largest quadrature error.
    Quadrature,
}

/// Design file. Torus designs carry `index_set`, sphere designs `degree`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignFile {
    pub schema: String,
    pub domain: Domain,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub index_set: Option<Vec<Vec<i64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub degree: Option<usize>,
    pub p: u32,
    #[serde(default)]
    pub kind: RuleKind,
    pub points: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    pub mz_constant: f64,
    pub exact: bool,
    pub meta: Meta,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Verification {
    pub mz_constant: f64,
    pub stored_mz_constant: f64,
    pub exact: bool,
    pub eps_target: f64,
}

impl DesignFile {
    pub fn from_design(design: &MzDesign) -> Result<Self> {
        let (domain, index_set, degree) = match &design.target {
            TargetSpace::Torus { index_set } => {
                let dim = index_set.first().map_or(1, |k| k.len());
                (Domain::Torus { dim }, Some(index_set.clone()), None)
            }
            TargetSpace::Sphere { degree } => (Domain::Sphere, None, Some(*degree)),
            TargetSpace::Other { domain, .. } => {
                return Err(invalid(format!("designs on `{domain}` systems have no file representation")));
            }
        };
        let (p, kind) = match design.kind {
            DesignKind::Mz { p } => (p, RuleKind::Mz),
            DesignKind::Quadrature => (1, RuleKind::Quadrature),
        };
        let mut meta = Meta::new(design.seed, design.restarts, design.iterations);
        meta.eps_target = Some(design.eps_target);
        meta.warnings = design.warnings.clone();
        Ok(DesignFile {
            schema: DESIGN_SCHEMA.to_string(),
            domain,
            index_set,
            degree,
            p,
            kind,
            points: design.measure.points.clone(),
            weights: design.measure.weights.clone(),
            mz_constant: design.mz_constant,
            exact: design.exact,
            meta,
        })
    }

    pub fn measure(&self) -> Result<DiscreteMeasure> {
        let m = DiscreteMeasure::new(self.points.clone(), self.weights.clone())?;
        for (i, x) in m.points.iter().enumerate() {
            self.domain.validate_point(x).map_err(|e| parse_err("design", format!("points[{i}]: {e}")))?;
        }
        Ok(m)
    }

    /// The system the design discretizes, before lifting.
    pub fn base_system(&self) -> Result<SharedSystem> {
        match (self.domain, &self.index_set, self.degree) {
            (Domain::Torus { dim }, Some(idx), _) => {
                if let Some(k) = idx.iter().find(|k| k.len() != dim) {
                    return Err(parse_err("design", format!("index_set entry {k:?} does not have dimension {dim}")));
                }
                Ok(Arc::new(TrigSystem::new(idx.clone())?))
            }
            (Domain::Sphere, _, Some(m)) => Ok(Arc::new(sphere_system(m))),
            (Domain::Torus { .. }, None, _) => Err(parse_err("design", "field `index_set` is required on the torus")),
            (Domain::Sphere, _, None) => Err(parse_err("design", "field `degree` is required on the sphere")),
        }
    }

    /// Recomputes `mz_constant` exactly as the builders do.
    pub fn recompute(&self) -> Result<f64> {
        let measure = self.measure()?;
        let base = self.base_system()?;
        match self.kind {
            RuleKind::Quadrature => {
                let integrals = base.integrals().ok_or_else(|| invalid("system has no closed-form integrals"))?;
                Ok(quadrature_error(&*base, &measure, &integrals))
            }
            RuleKind::Mz => {
                let lifted = lift_system(&base, self.p, DEFAULT_LIFT_CAP)?;
                mz_constant(&*orthonormalize(lifted)?, &measure)
            }
        }
    }

    pub fn verify(&self) -> Result<Verification> {
        let eps = self.recompute()?;
        let eps_target = self.meta.eps_target.unwrap_or(DEFAULT_EPS_TARGET);
        Ok(Verification { mz_constant: eps, stored_mz_constant: self.mz_constant, exact: eps <= eps_target, eps_target })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let f: DesignFile = read_json(path, "design file")?;
        check_schema(&f.schema, DESIGN_SCHEMA)?;
        if f.points.len() != f.weights.len() {
            return Err(parse_err("design file", format!("{} points but {} weights", f.points.len(), f.weights.len())));
        }
        Ok(f)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let f: DesignFile = from_json_text(text, "design file")?;
        check_schema(&f.schema, DESIGN_SCHEMA)?;
        Ok(f)
    }

    /// One row per atom: `x_1..x_d, weight`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_measure_csv(path, &self.points, &self.weights)
    }
}

pub fn write_measure_csv(path: &Path, points: &[Vec<f64>], weights: &[f64]) -> Result<()> {
    let io = |e: csv::Error| Error::Io { context: format!("writing {}", path.display()), source: e.into() };
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    let d = points.first().map_or(0, |x| x.len());
    let mut header: Vec<String> = (1..=d).map(|i| format!("x_{i}")).collect();
    header.push("weight".into());
    w.write_record(&header).map_err(io)?;
    for (x, wt) in points.iter().zip(weights) {
        let row: Vec<String> = x.iter().chain(std::iter::once(wt)).map(|v| format!("{v:e}")).collect();
        w.write_record(&row).map_err(io)?;
    }
    w.flush().map_err(|source| Error::Io { context: format!("writing {}", path.display()), source })
}

/// Frame file: `transform` is `A_λ^{-1/2}` row-major as `[re, im]` pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameFile {
    pub schema: String,
    pub domain: Domain,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub index_set: Option<Vec<Vec<i64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub degree: Option<usize>,
    pub transform: Vec<Vec<[f64; 2]>>,
    pub points: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    pub norm_cap: f64,
    pub certificate: Certificate,
    pub certified: bool,
    pub meta: Meta,
}

impl FrameFile {
    pub fn from_result(result: &EntfResult, target: TargetSpace) -> Result<Self> {
        let (domain, index_set, degree) = match target {
            TargetSpace::Torus { index_set } => (Domain::Torus { dim: index_set.first().map_or(1, |k| k.len()) }, Some(index_set), None),
            TargetSpace::Sphere { degree } => (Domain::Sphere, None, Some(degree)),
            TargetSpace::Other { domain, .. } => return Err(invalid(format!("frames on `{domain}` systems have no file representation"))),
        };
        let m = result.transform.matrix();
        let transform = (0..m.nrows()).map(|r| (0..m.ncols()).map(|c| [m[(r, c)].re, m[(r, c)].im]).collect()).collect();
        let d = &result.design;
        Ok(FrameFile {
            schema: FRAME_SCHEMA.to_string(),
            domain,
            index_set,
            degree,
            transform,
            points: result.measure.points.clone(),
            weights: result.measure.weights.clone(),
            norm_cap: result.norm_cap,
            certificate: result.certificate,
            certified: result.certified,
            meta: Meta::new(d.seed, d.restarts_used, d.iterations),
        })
    }

    pub fn transform(&self) -> Result<HermitianMatrix> {
        let n = self.transform.len();
        if let Some(r) = self.transform.iter().position(|row| row.len() != n) {
            return Err(parse_err("frame file", format!("transform row {r} does not have {n} entries")));
        }
        HermitianMatrix::new(nalgebra::DMatrix::from_fn(n, n, |r, c| C64::new(self.transform[r][c][0], self.transform[r][c][1])))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let f: FrameFile = read_json(path, "frame file")?;
        check_schema(&f.schema, FRAME_SCHEMA)?;
        Ok(f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum KernelSpec {
    /// Periodic Sobolev kernel with `σ_k = (1 + |k|)^{-s}` on `𝕋ᵈ`.
    Sobolev { dim: usize, smoothness: f64, capacity: usize },
}

impl KernelSpec {
    pub fn spectrum(&self) -> Result<Arc<dyn MercerSpectrum>> {
        match *self {
            KernelSpec::Sobolev { dim, smoothness, capacity } => Ok(Arc::new(SobolevTorusSpectrum::new(dim, smoothness, capacity)?)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorFile {
    pub schema: String,
    pub kernel: KernelSpec,
    pub n: usize,
    pub points: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    pub omega: Vec<f64>,
    pub orthonormality_defect: f64,
    pub tail_trace: f64,
    pub splits_tie: bool,
    pub meta: Meta,
}

impl OperatorFile {
    pub fn from_operator(op: &RecoveryOperator, kernel: KernelSpec, meta: Meta) -> Self {
        OperatorFile {
            schema: OPERATOR_SCHEMA.to_string(),
            kernel,
            n: op.n,
            points: op.measure.points.clone(),
            weights: op.measure.weights.clone(),
            omega: op.omega.clone(),
            orthonormality_defect: op.orthonormality_defect,
            tail_trace: op.tail_trace,
            splits_tie: op.splits_tie,
            meta,
        }
    }

    /// Rebuilds the operator; `A`, `ω` and the defect are recomputed.
    pub fn operator(&self) -> Result<RecoveryOperator> {
        let spectrum = self.kernel.spectrum()?;
        let measure = DiscreteMeasure::new(self.points.clone(), self.weights.clone())?;
        let tail = spectrum.tail_trace(self.n);
        assemble(spectrum, self.n, measure, tail)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let f: OperatorFile = read_json(path, "operator file")?;
        check_schema(&f.schema, OPERATOR_SCHEMA)?;
        Ok(f)
    }
}

fn parse_err(what: &str, message: impl Into<String>) -> Error {
    Error::Parse { what: what.to_string(), message: message.into() }
}

fn check_schema(found: &str, expected: &str) -> Result<()> {
    if found != expected {
        return Err(parse_err("file", format!("field `schema`: expected `{expected}`, found `{found}`")));
    }
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| invalid(format!("serializing {}: {e}", path.display())))?;
    std::fs::write(path, text + "\n").map_err(|source| Error::Io { context: format!("writing {}", path.display()), source })
}

/// Reads JSON, reporting line and column of malformed input.
pub fn read_json<T: DeserializeOwned>(path: &Path, what: &str) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io { context: format!("reading {}", path.display()), source })?;
    from_json_text(&text, &format!("{what} {}", path.display()))
}

pub fn from_json_text<T: DeserializeOwned>(text: &str, what: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| parse_err(what, format!("line {}, column {}: {e}", e.line(), e.column())))
}
