//! Shared fixtures for the benchmarks.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use mzforge_core::system::{FunctionSystem, TrigSystem};
use mzforge_core::{DiscreteMeasure, MultiIndexSet};

pub fn l1_ball(radius: i64) -> TrigSystem {
    TrigSystem::new(MultiIndexSet::l1_ball(2, radius).expect("valid radius").indices().to_vec()).expect("valid set")
}

/// `count` uniform random atoms with random positive weights summing to one.
pub fn random_measure(system: &dyn FunctionSystem, count: usize, seed: u64) -> DiscreteMeasure {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points: Vec<Vec<f64>> = (0..count).map(|_| system.sample_point(&mut rng)).collect();
    let raw: Vec<f64> = (0..count).map(|i| 1.0 + (i % 7) as f64).collect();
    let total: f64 = raw.iter().sum();
    DiscreteMeasure::new(points, raw.into_iter().map(|w| w / total).collect()).expect("valid measure")
}
