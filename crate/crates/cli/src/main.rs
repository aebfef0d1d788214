use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use mzforge_core::design::{OptimizerConfig, WeightMode};
use mzforge_core::experiments::{run_experiment, ExperimentConfig, ExperimentId, Scale};
use mzforge_core::frames::{build_entf, EntfConfig};
use mzforge_core::io::{DesignFile, FrameFile, KernelSpec, Meta, OperatorFile, RuleKind};
use mzforge_core::lattice::{
    as_big_pair, fooling_index_set, minimal_lattice_size, reconstructs, refutes_all_lattices, verify_fooling, LatticeSearch,
    Rank1Lattice,
};
use mzforge_core::quadrature::{build_lp_mz_even, build_tchakaloff, verify_lp, BuildConfig, TargetSpace};
use mzforge_core::recovery::{build_recovery, recovery_error_bound_check, RecoveryConfig, ORTHONORMALITY_TOL};
use mzforge_core::system::{sphere_system, trig_system};
use mzforge_core::{MultiIndexSet, SharedSystem};

/// Exit code for results that are valid but not exact.
const NOT_EXACT: u8 = 2;
/// Largest `|e_a − e_{a'}|` on the rational grid accepted by `lattice fool`.
const FOOLING_TOL: f64 = 1e-9;

#[derive(Parser)]
#[command(name = "mzforge", version, about = "Exact Marcinkiewicz-Zygmund designs, frames, quadrature and recovery")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Optimize an exact L_p-MZ design or a positive quadrature rule.
    Design(DesignArgs),
    /// Recompute the MZ constant of a design file.
    Verify(VerifyArgs),
    /// Build an equal-norm tight frame from a D-optimal design.
    Frame(FrameArgs),
    /// Rank-1 lattice search, checks and fooling sets.
    #[command(subcommand)]
    Lattice(LatticeCommand),
    /// Sampling recovery operators for Sobolev kernels on the torus.
    #[command(subcommand)]
    Recover(RecoverCommand),
    /// Reproduce one of the numerical experiments.
    Experiment(ExperimentArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum DomainArg {
    Torus,
    Sphere,
}

#[derive(Clone, Copy, ValueEnum)]
enum WeightsArg {
    Equal,
    Free,
}

#[derive(Args)]
struct SpaceArgs {
    #[arg(long, value_enum, default_value = "torus")]
    domain: DomainArg,
    /// Index set: `l1ball:d:r`, `hyperbolic:d:T`, `cube:d:r`, `random:d:count:bound:seed`,
    /// `exp1-i3`, `exp3-1d`, or a JSON file of integer vectors.
    #[arg(long, visible_alias = "index-set")]
    index: Option<String>,
    /// Polynomial degree on the sphere.
    #[arg(long)]
    degree: Option<usize>,
}

impl SpaceArgs {
    fn system(&self) -> Result<SharedSystem> {
        Ok(match self.domain {
            DomainArg::Torus => {
                let spec = self.index.as_deref().context("--index is required on the torus")?;
                Arc::new(trig_system(parse_index(spec)?))
            }
            DomainArg::Sphere => Arc::new(sphere_system(self.degree.context("--degree is required on the sphere")?)),
        })
    }
}

#[derive(Args)]
struct OptimizerArgs {
    /// JSON optimizer config; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    points: Option<usize>,
    #[arg(long)]
    restarts: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    eps_target: Option<f64>,
    #[arg(long, value_enum)]
    weights: Option<WeightsArg>,
    #[arg(long)]
    max_iters: Option<usize>,
}

impl OptimizerArgs {
    fn optimizer(&self) -> Result<OptimizerConfig> {
        let mut c = match &self.config {
            Some(p) => mzforge_core::io::read_json::<OptimizerConfig>(p, "optimizer config")?,
            None => OptimizerConfig::default(),
        };
        if let Some(v) = self.restarts {
            c.max_restarts = v;
        }
        if let Some(v) = self.seed {
            c.seed = v;
        }
        if let Some(v) = self.eps_target {
            c.eps_target = v;
        }
        if let Some(v) = self.max_iters {
            c.max_iters = v;
        }
        if let Some(w) = self.weights {
            c.weight_mode = match w {
                WeightsArg::Equal => WeightMode::Equal,
                WeightsArg::Free => WeightMode::Free,
            };
        }
        Ok(c)
    }
}

#[derive(Args)]
struct DesignArgs {
    #[command(flatten)]
    space: SpaceArgs,
    #[command(flatten)]
    opt: OptimizerArgs,
    /// Even exponent of the MZ inequality.
    #[arg(long, default_value_t = 2)]
    p: u32,
    /// Build a positive quadrature rule instead of an MZ design.
    #[arg(long)]
    quadrature: bool,
    #[arg(long, short)]
    out: PathBuf,
    /// Also write the atoms as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long)]
    design: PathBuf,
    /// Random functions for the L_p check when p > 2.
    #[arg(long, default_value_t = 50)]
    trials: usize,
}

#[derive(Args)]
struct FrameArgs {
    #[command(flatten)]
    space: SpaceArgs,
    #[command(flatten)]
    opt: OptimizerArgs,
    #[arg(long, default_value_t = 100_000)]
    samples: usize,
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum LatticeCommand {
    /// Smallest rank-1 lattice reconstructing V(I).
    Search {
        #[arg(long, visible_alias = "index-set")]
        index: String,
        #[arg(long, default_value_t = 200)]
        max_size: u64,
        /// Cap on generator candidates examined.
        #[arg(long)]
        budget: Option<u64>,
    },
    /// Fooling sets {a, a + M!·b} against all lattices of size ≤ M.
    Fool {
        #[arg(long, default_value_t = 2)]
        dim: usize,
        #[arg(long, default_value_t = 8)]
        max_lattice: u64,
        /// Comma-separated base frequency; zero by default.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        a: Option<Vec<i64>>,
        /// Comma-separated direction; the first unit vector by default.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        b: Option<Vec<i64>>,
    },
    /// Whether a given lattice reconstructs V(I).
    Check {
        #[arg(long)]
        size: u64,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        gen: Vec<i64>,
        #[arg(long, visible_alias = "index-set")]
        index: String,
    },
}

#[derive(Subcommand)]
enum RecoverCommand {
    /// Build the recovery operator for a periodic Sobolev kernel.
    Build {
        #[arg(long, default_value_t = 1)]
        dim: usize,
        #[arg(long, default_value_t = 2.0)]
        smoothness: f64,
        /// Number of eigenfunctions recovered.
        #[arg(long)]
        n: usize,
        /// Eigenpairs available for error checks.
        #[arg(long, default_value_t = 1024)]
        capacity: usize,
        #[command(flatten)]
        opt: OptimizerArgs,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Check the worst-case error bound on random unit-ball functions.
    Check {
        #[arg(long)]
        op: PathBuf,
        #[arg(long, default_value_t = 100)]
        trials: usize,
        /// Eigenpairs in each test function; defaults to 50n.
        #[arg(long)]
        truncation: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Args)]
struct ExperimentArgs {
    #[arg(long, value_parser = ["exp1", "exp2", "exp3"])]
    id: String,
    #[arg(long, value_parser = ["desk", "full"], default_value = "desk")]
    scale: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    restarts: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    dims: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    points: Option<Vec<usize>>,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long, short)]
    out: PathBuf,
}

fn parse_index(spec: &str) -> Result<MultiIndexSet> {
    let set = if Path::new(spec).is_file() { MultiIndexSet::read_json(Path::new(spec))? } else { MultiIndexSet::parse_spec(spec)? };
    Ok(set)
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn status(ok: bool) -> ExitCode {
    if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(NOT_EXACT)
    }
}

fn cmd_design(args: &DesignArgs) -> Result<ExitCode> {
    let system = args.space.system()?;
    let config = BuildConfig { optimizer: args.opt.optimizer()?, n_points: args.opt.points, ..Default::default() };
    let design = if args.quadrature { build_tchakaloff(&system, &config)? } else { build_lp_mz_even(&system, args.p, &config)? };
    for w in &design.warnings {
        log::warn!("{w}");
    }
    let file = DesignFile::from_design(&design)?;
    file.write(&args.out)?;
    if let Some(csv) = &args.csv {
        file.write_csv(csv)?;
    }
    print_json(&serde_json::json!({
        "out": args.out,
        "atoms": file.points.len(),
        "mz_constant": file.mz_constant,
        "exact": file.exact,
        "restarts": file.meta.restarts,
    }))?;
    Ok(status(file.exact))
}

fn cmd_verify(args: &VerifyArgs) -> Result<ExitCode> {
    let file = DesignFile::read(&args.design)?;
    let v = file.verify()?;
    let mut out = serde_json::to_value(v)?;
    if file.kind == RuleKind::Mz && file.p > 2 {
        let report = verify_lp(&*file.base_system()?, &file.measure()?, file.p, args.trials, file.meta.seed)?;
        out["lp_max_relative_deviation"] = serde_json::json!(report.max_relative_deviation);
    }
    print_json(&out)?;
    Ok(status(v.exact))
}

fn cmd_frame(args: &FrameArgs) -> Result<ExitCode> {
    let system = args.space.system()?;
    let mut config = EntfConfig { n_points: args.opt.points, certificate_samples: args.samples, ..Default::default() };
    config.logdet.optimizer = args.opt.optimizer()?;
    let result = build_entf(&*system, &config)?;
    let file = FrameFile::from_result(&result, TargetSpace::of(&*system))?;
    file.write(&args.out)?;
    print_json(&serde_json::json!({
        "out": args.out,
        "atoms": file.points.len(),
        "certified": file.certified,
        "certificate": file.certificate,
    }))?;
    Ok(status(file.certified))
}

fn cmd_lattice(cmd: &LatticeCommand) -> Result<ExitCode> {
    match cmd {
        LatticeCommand::Search { index, max_size, budget } => {
            let set = parse_index(index)?;
            let result = minimal_lattice_size(&set, *max_size, *budget);
            print_json(&serde_json::json!({
                "frequencies": set.len(),
                "difference_set": set.difference_set().len(),
                "result": result,
            }))?;
            Ok(status(matches!(result, LatticeSearch::Found { .. })))
        }
        LatticeCommand::Fool { dim, max_lattice, a, b } => {
            let a = a.clone().unwrap_or_else(|| vec![0; *dim]);
            let b = b.clone().unwrap_or_else(|| (0..*dim).map(|j| i64::from(j == 0)).collect());
            if a.len() != *dim || b.len() != *dim {
                bail!("--a and --b must have {dim} entries");
            }
            let set = fooling_index_set(&a, &b, *max_lattice)?;
            let refuted = refutes_all_lattices(&set, *max_lattice);
            let report = verify_fooling(&as_big_pair(&set)?, *max_lattice)?;
            let ok = refuted && report.max_abs <= FOOLING_TOL;
            print_json(&serde_json::json!({
                "index_set": set.indices(),
                "all_lattices_refuted": refuted,
                "fooling": report,
            }))?;
            Ok(status(ok))
        }
        LatticeCommand::Check { size, gen, index } => {
            let set = parse_index(index)?;
            let lattice = Rank1Lattice::new(*size, gen.clone())?;
            if lattice.dim() != set.dim() {
                bail!("generator has {} entries but the index set has dimension {}", lattice.dim(), set.dim());
            }
            let ok = reconstructs(&lattice, &set);
            print_json(&serde_json::json!({ "size": size, "generator": gen, "reconstructs": ok }))?;
            Ok(status(ok))
        }
    }
}

fn cmd_recover(cmd: &RecoverCommand) -> Result<ExitCode> {
    match cmd {
        RecoverCommand::Build { dim, smoothness, n, capacity, opt, out } => {
            let kernel = KernelSpec::Sobolev { dim: *dim, smoothness: *smoothness, capacity: *capacity };
            let optimizer = opt.optimizer()?;
            let seed = optimizer.seed;
            let config = RecoveryConfig { optimizer, n_points: opt.points };
            let op = build_recovery(kernel.spectrum()?, *n, &config)?;
            let file = OperatorFile::from_operator(&op, kernel, Meta::new(seed, config.optimizer.max_restarts, 0));
            file.write(out)?;
            print_json(&serde_json::json!({
                "out": out,
                "atoms": op.len(),
                "orthonormality_defect": op.orthonormality_defect,
                "tail_trace": op.tail_trace,
                "splits_tie": op.splits_tie,
            }))?;
            Ok(ExitCode::SUCCESS)
        }
        RecoverCommand::Check { op, trials, truncation, seed } => {
            let op = OperatorFile::read(op)?.operator()?;
            let report = recovery_error_bound_check(&op, *trials, *truncation, *seed);
            if report.splits_tie {
                log::warn!("the truncation splits a group of equal eigenvalues");
            }
            print_json(&serde_json::json!({
                "report": report,
                "orthonormality_defect": op.orthonormality_defect,
            }))?;
            Ok(status(report.max_ratio <= 1.0 && op.orthonormality_defect <= ORTHONORMALITY_TOL))
        }
    }
}

fn cmd_experiment(args: &ExperimentArgs) -> Result<ExitCode> {
    let id: ExperimentId = args.id.parse()?;
    let scale: Scale = args.scale.parse()?;
    let config = ExperimentConfig {
        id,
        scale,
        seed: args.seed,
        out_dir: args.out.clone(),
        restarts: args.restarts,
        dims: args.dims.clone(),
        points: args.points.clone(),
        max_iters: args.max_iters,
    };
    let summary = run_experiment(&config)?;
    let reverify_failures = summary.cells.iter().filter(|c| c.reverified == Some(false)).count();
    print_json(&serde_json::json!({
        "experiment": summary.experiment,
        "cells": summary.cells.len(),
        "exact_cells": summary.cells.iter().filter(|c| c.exact).count(),
        "dimensions": summary.dimensions,
        "first_exact": summary.first_exact,
        "reverify_failures": reverify_failures,
    }))?;
    if reverify_failures > 0 {
        bail!("{reverify_failures} design files did not reproduce their MZ constant");
    }
    Ok(ExitCode::SUCCESS)
}

fn run(cli: &Cli) -> Result<ExitCode> {
    match &cli.command {
        Command::Design(a) => cmd_design(a),
        Command::Verify(a) => cmd_verify(a),
        Command::Frame(a) => cmd_frame(a),
        Command::Lattice(c) => cmd_lattice(c),
        Command::Recover(c) => cmd_recover(c),
        Command::Experiment(a) => cmd_experiment(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    // Usage errors exit with 1; 2 is reserved for non-exact results.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::FAILURE } else { ExitCode::SUCCESS };
        }
    };
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
