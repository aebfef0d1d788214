//! Reproduction runs for the three numerical experiments on the torus.
//!
//! Every run is split into cells `(dim, n, weights)`. Each finished cell is
//! appended to `<out>/<id>_cells.jsonl`, and a rerun with the same output
//! directory skips cells already present there.

use std::collections::BTreeMap;
use std::fs::OpenOptions;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::design::{restart_seed, splitmix64, OptimizerConfig, WeightMode};
use crate::error::{invalid, Error, Result};
use crate::index_set::MultiIndexSet;
use crate::io::{write_json, DesignFile, TOOL_VERSION};
use crate::quadrature::{build_exact_l2_mz, BuildConfig};
use crate::system::{SharedSystem, TrigSystem};

pub const SUMMARY_SCHEMA: &str = "mzexperiment/1";
/// `ε` below which a cell counts toward `n*(d)`.
pub const N_STAR_THRESHOLD: f64 = 1e-10;
/// Frequencies per dimension in the dimension sweep.
pub const EXP2_FREQUENCIES: usize = 20;
pub const EXP2_BOUND: i64 = 100;
/// Reference `n*(d)` for `d = 1..=20`.
pub const EXP2_REFERENCE_N_STAR: [usize; 20] = [241, 192, 129, 97, 78, 66, 56, 49, 44, 39, 36, 33, 31, 29, 27, 25, 24, 23, 20, 20];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExperimentId {
    Exp1,
    Exp2,
    Exp3,
}

impl ExperimentId {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentId::Exp1 => "exp1",
            ExperimentId::Exp2 => "exp2",
            ExperimentId::Exp3 => "exp3",
        }
    }
}

impl FromStr for ExperimentId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exp1" | "1" => Ok(ExperimentId::Exp1),
            "exp2" | "2" => Ok(ExperimentId::Exp2),
            "exp3" | "3" => Ok(ExperimentId::Exp3),
            other => Err(invalid(format!("unknown experiment `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    Desk,
    Full,
}

impl FromStr for Scale {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Scale::Desk),
            "full" => Ok(Scale::Full),
            other => Err(invalid(format!("unknown scale `{other}`"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub id: ExperimentId,
    pub scale: Scale,
    pub seed: u64,
    pub out_dir: PathBuf,
    /// Overrides the scale default.
    pub restarts: Option<usize>,
    /// Dimensions for the dimension sweep.
    pub dims: Option<Vec<usize>>,
    /// Point counts; for the dimension sweep applied to every dimension.
    pub points: Option<Vec<usize>>,
    pub max_iters: Option<usize>,
}

impl ExperimentConfig {
    pub fn new(id: ExperimentId, scale: Scale, out_dir: impl Into<PathBuf>) -> Self {
        ExperimentConfig { id, scale, seed: 0, out_dir: out_dir.into(), restarts: None, dims: None, points: None, max_iters: None }
    }
}

/// One optimized design in a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRecord {
    pub label: String,
    pub dim: usize,
    pub n: usize,
    pub weights: WeightMode,
    pub mz_constant: f64,
    pub exact: bool,
    /// Atoms after reduction.
    pub atoms: usize,
    pub seed: u64,
    pub restarts: usize,
    pub iterations: usize,
    /// Whether the written design file reproduced `mz_constant` to 1e-14.
    pub reverified: Option<bool>,
    pub seconds: f64,
}

impl CellRecord {
    fn key(&self) -> (String, usize, usize, WeightMode) {
        (self.label.clone(), self.dim, self.n, self.weights)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimensionSummary {
    pub dim: usize,
    pub frequencies: usize,
    pub difference_set: usize,
    /// First scanned `n` with `ε < 1e-10`.
    pub n_star: Option<usize>,
    pub reference_n_star: Option<usize>,
    pub floor_400_over_d: usize,
    /// `log₁₀` of the largest `ε` below `n*` over `ε(n*)`.
    pub drop_orders: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub schema: String,
    pub experiment: ExperimentId,
    pub scale: Scale,
    pub seed: u64,
    pub restarts: usize,
    pub max_iters: usize,
    pub tool_version: String,
    pub cells: Vec<CellRecord>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub dimensions: Vec<DimensionSummary>,
    /// Per weight mode, the first scanned `n` with `ε < 1e-10`.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub first_exact: BTreeMap<String, Option<usize>>,
}

struct Cell {
    label: String,
    dim: usize,
    n: usize,
    weights: WeightMode,
    index_set: MultiIndexSet,
    design_file: bool,
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentSummary> {
    std::fs::create_dir_all(&config.out_dir)
        .map_err(|source| Error::Io { context: format!("creating {}", config.out_dir.display()), source })?;
    let (cells, restarts, max_iters) = plan(config)?;
    let checkpoint = config.out_dir.join(format!("{}_cells.jsonl", config.id.name()));
    let done = load_checkpoint(&checkpoint)?;

    let mut records = Vec::with_capacity(cells.len());
    for cell in &cells {
        let key = (cell.label.clone(), cell.dim, cell.n, cell.weights);
        if let Some(r) = done.iter().find(|r| r.key() == key) {
            records.push(r.clone());
            continue;
        }
        let record = run_cell(config, cell, restarts, max_iters)?;
        log::info!("{} d={} n={} {:?}: eps {:e}", record.label, record.dim, record.n, record.weights, record.mz_constant);
        append_checkpoint(&checkpoint, &record)?;
        records.push(record);
    }

    let summary = summarize(config, &cells, records, restarts, max_iters);
    write_cells_csv(&config.out_dir.join(format!("{}.csv", config.id.name())), &summary.cells)?;
    write_json(&config.out_dir.join(format!("{}_summary.json", config.id.name())), &summary)?;
    Ok(summary)
}

fn plan(config: &ExperimentConfig) -> Result<(Vec<Cell>, usize, usize)> {
    let desk = config.scale == Scale::Desk;
    let mut cells = Vec::new();
    let restarts;
    match config.id {
        ExperimentId::Exp1 => {
            restarts = config.restarts.unwrap_or(if desk { 10 } else { 50 });
            let sets = [
                ("l1ball", MultiIndexSet::l1_ball(2, 4)?, 41),
                ("hyperbolic", MultiIndexSet::hyperbolic_cross(2, 6)?, 45),
                ("i3", MultiIndexSet::exp1_bad(), 91),
            ];
            for (label, index_set, n) in sets {
                let n = config.points.as_ref().and_then(|p| p.first().copied()).unwrap_or(n);
                cells.push(Cell { label: label.into(), dim: 2, n, weights: WeightMode::Free, index_set, design_file: true });
            }
        }
        ExperimentId::Exp2 => {
            restarts = config.restarts.unwrap_or(if desk { 10 } else { 50 });
            let dims = config.dims.clone().unwrap_or_else(|| if desk { vec![1, 2, 3] } else { (1..=20).collect() });
            for d in dims {
                if d == 0 {
                    return Err(invalid("dimension must be at least 1"));
                }
                let index_set = exp2_index_set(d, config.seed)?;
                let points = match &config.points {
                    Some(p) => p.clone(),
                    None if desk => desk_window(d, index_set.difference_set().len()),
                    None => (20..=300).collect(),
                };
                for n in points {
                    let index_set = index_set.clone();
                    cells.push(Cell { label: format!("d{d}"), dim: d, n, weights: WeightMode::Equal, index_set, design_file: true });
                }
            }
        }
        ExperimentId::Exp3 => {
            restarts = config.restarts.unwrap_or(if desk { 3 } else { 1000 });
            let points = config.points.clone().unwrap_or_else(|| {
                if desk {
                    vec![40, 60, 80, 88, 90, 91, 92, 96, 103]
                } else {
                    (20..=200).collect()
                }
            });
            for weights in [WeightMode::Free, WeightMode::Equal] {
                for &n in &points {
                    let label = match weights {
                        WeightMode::Free => "free",
                        WeightMode::Equal => "equal",
                    };
                    cells.push(Cell { label: label.into(), dim: 1, n, weights, index_set: MultiIndexSet::exp3_bad(), design_file: false });
                }
            }
        }
    }
    let max_iters = config.max_iters.unwrap_or(if desk { 8000 } else { 20_000 });
    Ok((cells, restarts, max_iters))
}

/// The seed-controlled frequency draw for dimension `d`.
pub fn exp2_index_set(d: usize, seed: u64) -> Result<MultiIndexSet> {
    MultiIndexSet::random(d, EXP2_FREQUENCIES, EXP2_BOUND, splitmix64(seed ^ (d as u64).wrapping_mul(0x9E37_79B9)))
}

/// Point counts bracketing `min(⌊400/d⌋, |D(I)|)`.
pub fn desk_window(d: usize, difference_set: usize) -> Vec<usize> {
    let t = (400 / d).min(difference_set) as f64;
    let mut v: Vec<usize> = [0.5, 0.8, 1.0, 1.2].iter().map(|f| ((f * t).round() as usize).max(EXP2_FREQUENCIES)).collect();
    v.dedup();
    v
}

fn cell_seed(master: u64, cell: &Cell) -> u64 {
    let label = cell.label.bytes().fold(0u64, |h, b| splitmix64(h ^ b as u64));
    let mode = match cell.weights {
        WeightMode::Free => 1,
        WeightMode::Equal => 2,
    };
    restart_seed(master ^ label ^ mode, cell.dim * 100_003 + cell.n)
}

fn run_cell(config: &ExperimentConfig, cell: &Cell, restarts: usize, max_iters: usize) -> Result<CellRecord> {
    let start = Instant::now();
    let system: SharedSystem = Arc::new(TrigSystem::new(cell.index_set.indices().to_vec())?);
    let seed = cell_seed(config.seed, cell);
    let build = BuildConfig {
        optimizer: OptimizerConfig { max_restarts: restarts, max_iters, seed, weight_mode: cell.weights, ..Default::default() },
        n_points: Some(cell.n),
        ..Default::default()
    };
    let design = build_exact_l2_mz(&system, &build)?;
    let mut reverified = None;
    if cell.design_file || design.mz_constant < N_STAR_THRESHOLD {
        let file = DesignFile::from_design(&design)?;
        let stem = format!("{}_{}_d{}_n{}_{:?}", config.id.name(), cell.label, cell.dim, cell.n, cell.weights).to_lowercase();
        let dir = config.out_dir.join("designs");
        std::fs::create_dir_all(&dir).map_err(|source| Error::Io { context: format!("creating {}", dir.display()), source })?;
        let path = dir.join(format!("{stem}.json"));
        file.write(&path)?;
        file.write_csv(&dir.join(format!("{stem}.csv")))?;
        let back = DesignFile::read(&path)?.recompute()?;
        reverified = Some((back - design.mz_constant).abs() <= 1e-14);
    }
    Ok(CellRecord {
        label: cell.label.clone(),
        dim: cell.dim,
        n: cell.n,
        weights: cell.weights,
        mz_constant: design.mz_constant,
        exact: design.exact,
        atoms: design.measure.len(),
        seed,
        restarts: design.restarts,
        iterations: design.iterations,
        reverified,
        seconds: start.elapsed().as_secs_f64(),
    })
}

/// First `n` with `ε < 1e-10` and the size of the drop into it.
pub fn threshold_crossing(curve: &[(usize, f64)]) -> (Option<usize>, Option<f64>) {
    let mut sorted = curve.to_vec();
    sorted.sort_by_key(|c| c.0);
    let Some(pos) = sorted.iter().position(|c| c.1 < N_STAR_THRESHOLD) else {
        return (None, None);
    };
    let before = sorted[..pos].iter().map(|c| c.1).fold(f64::NAN, f64::max);
    let drop = if before.is_nan() { None } else { Some(before.log10() - sorted[pos].1.max(f64::MIN_POSITIVE).log10()) };
    (Some(sorted[pos].0), drop)
}

fn summarize(config: &ExperimentConfig, cells: &[Cell], records: Vec<CellRecord>, restarts: usize, max_iters: usize) -> ExperimentSummary {
    let mut dimensions = Vec::new();
    let mut first_exact = BTreeMap::new();
    match config.id {
        ExperimentId::Exp2 => {
            let mut dims: Vec<usize> = records.iter().map(|r| r.dim).collect();
            dims.dedup();
            for d in dims {
                let curve: Vec<(usize, f64)> = records.iter().filter(|r| r.dim == d).map(|r| (r.n, r.mz_constant)).collect();
                let (n_star, drop_orders) = threshold_crossing(&curve);
                let idx = &cells.iter().find(|c| c.dim == d).expect("cell exists for every dimension").index_set;
                dimensions.push(DimensionSummary {
                    dim: d,
                    frequencies: idx.len(),
                    difference_set: idx.difference_set().len(),
                    n_star,
                    reference_n_star: EXP2_REFERENCE_N_STAR.get(d - 1).copied(),
                    floor_400_over_d: 400 / d,
                    drop_orders,
                });
            }
        }
        ExperimentId::Exp3 => {
            for label in ["free", "equal"] {
                let curve: Vec<(usize, f64)> = records.iter().filter(|r| r.label == label).map(|r| (r.n, r.mz_constant)).collect();
                first_exact.insert(label.to_string(), threshold_crossing(&curve).0);
            }
        }
        ExperimentId::Exp1 => {}
    }
    ExperimentSummary {
        schema: SUMMARY_SCHEMA.to_string(),
        experiment: config.id,
        scale: config.scale,
        seed: config.seed,
        restarts,
        max_iters,
        tool_version: TOOL_VERSION.to_string(),
        cells: records,
        dimensions,
        first_exact,
    }
}

fn load_checkpoint(path: &Path) -> Result<Vec<CellRecord>> {
    let Ok(text) = std::fs::read_to_string(path) else {
        return Ok(Vec::new());
    };
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Parse {
                what: format!("checkpoint {}", path.display()),
                message: format!("line {}, column {}: {e}", i + 1, e.column()),
            })
        })
        .collect()
}

fn append_checkpoint(path: &Path, record: &CellRecord) -> Result<()> {
    let io = |source| Error::Io { context: format!("writing {}", path.display()), source };
    let mut f = OpenOptions::new().create(true).append(true).open(path).map_err(io)?;
    let line = serde_json::to_string(record).map_err(|e| invalid(e.to_string()))?;
    writeln!(f, "{line}").map_err(io)
}

fn write_cells_csv(path: &Path, cells: &[CellRecord]) -> Result<()> {
    let io = |e: csv::Error| Error::Io { context: format!("writing {}", path.display()), source: e.into() };
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    w.write_record(["label", "dim", "n", "weights", "mz_constant", "exact", "atoms", "seed", "restarts", "iterations", "reverified", "seconds"])
        .map_err(io)?;
    for c in cells {
        let weights = match c.weights {
            WeightMode::Free => "free",
            WeightMode::Equal => "equal",
        };
        w.write_record([
            c.label.clone(),
            c.dim.to_string(),
            c.n.to_string(),
            weights.to_string(),
            format!("{:e}", c.mz_constant),
            c.exact.to_string(),
            c.atoms.to_string(),
            c.seed.to_string(),
            c.restarts.to_string(),
            c.iterations.to_string(),
            c.reverified.map_or(String::new(), |b| b.to_string()),
            format!("{:.3}", c.seconds),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|source| Error::Io { context: format!("writing {}", path.display()), source })
}
