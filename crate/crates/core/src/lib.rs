//! Exact Marcinkiewicz-Zygmund discretizations on the torus and the sphere.
//!
//! The crate builds weighted point sets `(xᵢ, wᵢ)` for which
//! `Σ wᵢ φ(xᵢ)φ(xᵢ)* = I` holds for a given function system `φ`, and uses
//! them for Parseval frames, exact quadrature, `L_p` discretization and
//! kernel-based recovery.

pub mod caratheodory;
pub mod design;
pub mod error;
pub mod experiments;
pub mod frames;
pub mod index_set;
pub mod io;
pub mod lattice;
pub mod linalg;
pub mod measure;
pub mod quadrature;
pub mod recovery;
pub mod spectrum;
pub mod system;

pub use design::{DesignResult, OptimizerConfig, WeightMode};
pub use error::{Error, Result};
pub use index_set::MultiIndexSet;
pub use linalg::{HermitianMatrix, C64};
pub use measure::{DiscreteMeasure, Domain};
pub use spectrum::{FiniteSpectrum, MercerSpectrum, SobolevTorusSpectrum};
pub use system::{FunctionSystem, SharedSystem};
