use std::collections::HashSet;
use std::f64::consts::TAU;

use nalgebra::DMatrix;
use proptest::prelude::*;

use mzforge_core::caratheodory::{reduce_conic, reduce_moment_vector, AtomizedGramian, DEFAULT_TOL};
use mzforge_core::design::{gramian, mz_constant, optimize_frobenius};
use mzforge_core::lattice::{reconstructs, Rank1Lattice};
use mzforge_core::system::{sphere_system, trig_phase, trig_system, FunctionSystem};
use mzforge_core::{DiscreteMeasure, HermitianMatrix, MercerSpectrum, MultiIndexSet, OptimizerConfig, SobolevTorusSpectrum, C64};

const RECONSTRUCTION_TOL: f64 = 1e-10;
const PSD_SLACK: f64 = 1e-10;
const CHRISTOFFEL_TOL: f64 = 1e-12;
const GRAMIAN_TOL: f64 = 1e-10;

fn hermitian(entries: &[(f64, f64)], n: usize) -> HermitianMatrix {
    let b = DMatrix::from_fn(n, n, |r, c| {
        let (re, im) = entries[r * n + c];
        C64::new(re, im)
    });
    HermitianMatrix::new((&b + b.adjoint()) * C64::new(0.5, 0.0)).unwrap()
}

fn matrix_strategy() -> impl Strategy<Value = HermitianMatrix> {
    (1usize..=6).prop_flat_map(|n| prop::collection::vec((-3.0..3.0f64, -3.0..3.0f64), n * n).prop_map(move |e| hermitian(&e, n)))
}

fn index_set_strategy() -> impl Strategy<Value = MultiIndexSet> {
    (1usize..=2, 1usize..=6).prop_flat_map(|(d, n)| {
        prop::collection::vec(prop::collection::vec(-8i64..=8, d), n).prop_filter_map("empty", |v| MultiIndexSet::from_dedup(v).ok())
    })
}

fn measure_strategy(dim: usize, max_atoms: usize) -> impl Strategy<Value = DiscreteMeasure> {
    prop::collection::vec((prop::collection::vec(0.0..1.0f64, dim), 0.05..1.0f64), 1..=max_atoms).prop_map(|atoms| {
        let total: f64 = atoms.iter().map(|a| a.1).sum();
        let (points, weights) = atoms.into_iter().map(|(p, w)| (p, w / total)).unzip();
        DiscreteMeasure::new(points, weights).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn eigendecomposition_reconstructs(a in matrix_strategy()) {
        let eig = a.eigh().unwrap();
        prop_assert!(eig.eigenvalues.windows(2).all(|w| w[0] <= w[1]));
        let back = eig.map_spectrum(|l| l);
        let err = (back - a.matrix()).norm();
        prop_assert!(err <= RECONSTRUCTION_TOL * (1.0 + a.frobenius_norm()));
    }

    #[test]
    fn spectral_distance_matches_eigenvalues(a in matrix_strategy()) {
        let ev = a.eigenvalues().unwrap();
        let d = a.spectral_distance_to_identity().unwrap();
        let expected = ev.iter().map(|l| (l - 1.0).abs()).fold(0.0, f64::max);
        prop_assert!((d - expected).abs() <= 1e-12);
        prop_assert!(HermitianMatrix::identity(a.dim()).spectral_distance_to_identity().unwrap() <= 1e-12);
    }

    #[test]
    fn gramian_satisfies_det_trace_bound(set in index_set_strategy(), seed in 0u64..1000) {
        let s = trig_system(set.clone());
        let m = DiscreteMeasure::uniform((0..2 * set.len()).map(|i| (0..set.dim()).map(|j| ((seed as f64 + 1.0) * (0.37 + i as f64 * 0.61 + j as f64 * 0.29)).fract()).collect()).collect());
        let a = gramian(&s, &m).unwrap();
        let ev = a.eigenvalues().unwrap();
        prop_assert!(ev[0] >= -PSD_SLACK);
        let n = a.dim() as f64;
        let det: f64 = ev.iter().map(|l| l.max(0.0)).product();
        prop_assert!(det.powf(1.0 / n) <= a.trace() / n + PSD_SLACK);
        prop_assert!((a.trace() - n).abs() <= 1e-12);
    }

    #[test]
    fn difference_set_is_symmetric(set in index_set_strategy()) {
        let diff = set.difference_set();
        let n = set.len();
        prop_assert!(diff.len() <= n * n - n + 1);
        prop_assert!(diff.contains_zero());
        for k in diff.iter() {
            let neg: Vec<i64> = k.iter().map(|v| -v).collect();
            prop_assert!(diff.contains(&neg));
        }
    }

    #[test]
    fn lattice_test_agrees_with_gramian(set in index_set_strategy(), size in 1u64..24, g in prop::collection::vec(0i64..24, 2)) {
        let z: Vec<i64> = g[..set.dim()].iter().map(|v| v % size as i64).collect();
        let lattice = Rank1Lattice::new(size, z.clone()).unwrap();
        let eps = mz_constant(&trig_system(set.clone()), &lattice.measure()).unwrap();
        let residues: HashSet<i64> = set.iter().map(|k| k.iter().zip(&z).map(|(a, b)| a * b).sum::<i64>().rem_euclid(size as i64)).collect();
        prop_assert_eq!(reconstructs(&lattice, &set), residues.len() == set.len());
        prop_assert_eq!(reconstructs(&lattice, &set), eps < 1e-10);
    }

    #[test]
    fn conic_reduction_preserves_gramian(set in index_set_strategy(), m in measure_strategy(2, 120)) {
        let s = trig_system(set.clone());
        let m = DiscreteMeasure::new(m.points.iter().map(|p| p[..set.dim()].to_vec()).collect(), m.weights.clone()).unwrap();
        let g = AtomizedGramian::new(&s, m.clone()).unwrap();
        let out = reduce_conic(&g, DEFAULT_TOL).unwrap();
        prop_assert!(out.measure.len() <= set.difference_set().len());
        let before = gramian(&s, &m).unwrap();
        let after = gramian(&s, &out.measure).unwrap();
        let drift = (after.matrix() - before.matrix()).norm();
        prop_assert!(drift <= GRAMIAN_TOL * (1.0 + before.frobenius_norm()));
        prop_assert!(out.measure.weights.iter().all(|w| *w >= 0.0));
    }

    #[test]
    fn moment_reduction_preserves_sums(rows in 1usize..5, cols in 1usize..60, seed in 0u64..1000) {
        let values = DMatrix::from_fn(rows, cols, |r, c| ((seed as f64 + 1.3) * (r as f64 * 7.1 + c as f64 * 3.7)).sin());
        let weights: Vec<f64> = (0..cols).map(|c| 1.0 / cols as f64 + 0.001 * (c % 3) as f64).collect();
        let out = reduce_moment_vector(&values, &weights, DEFAULT_TOL).unwrap();
        prop_assert!(out.kept.len() <= rows + 1);
        let total: f64 = weights.iter().sum();
        let kept_total: f64 = out.weights.iter().sum();
        prop_assert!((total - kept_total).abs() <= 1e-12);
        for r in 0..rows {
            let before: f64 = (0..cols).map(|c| values[(r, c)] * weights[c]).sum();
            let after: f64 = out.kept.iter().zip(&out.weights).map(|(&c, w)| values[(r, c)] * w).sum();
            prop_assert!((before - after).abs() <= 1e-10);
        }
    }

    #[test]
    fn sphere_christoffel_identity(degree in 0usize..6, u in 0.0..1.0f64, v in 0.0..1.0f64) {
        let s = sphere_system(degree);
        let z = 2.0 * u - 1.0;
        let r = (1.0 - z * z).sqrt();
        let x = [r * (TAU * v).cos(), r * (TAU * v).sin(), z];
        let sum: f64 = s.eval(&x).iter().map(|p| p.norm_sqr()).sum();
        prop_assert!((sum - s.len() as f64).abs() <= CHRISTOFFEL_TOL * s.len() as f64);
    }

    #[test]
    fn trig_phase_is_exact_for_large_frequencies(k in -50_000_000i64..50_000_000, num in 0u32..1024) {
        let x = num as f64 / 1024.0;
        let exact = ((k as i128 * num as i128).rem_euclid(1024)) as f64 / 1024.0;
        let got = trig_phase(&[k], &[x]).rem_euclid(1.0);
        let diff = (got - exact).abs();
        prop_assert!(diff.min(1.0 - diff) <= 1e-15);
    }

    #[test]
    fn measures_roundtrip_through_json(m in measure_strategy(3, 20)) {
        let text = serde_json::to_string(&m).unwrap();
        let back: DiscreteMeasure = serde_json::from_str(&text).unwrap();
        prop_assert_eq!(back, m);
    }

    #[test]
    fn sobolev_sigmas_are_nonincreasing(s in 1.0..3.0f64, dim in 1usize..=2) {
        let spec = SobolevTorusSpectrum::new(dim, s, 200).unwrap();
        let sig: Vec<f64> = (0..spec.available()).map(|j| spec.sigma(j)).collect();
        prop_assert!(sig.windows(2).all(|w| w[0] >= w[1]));
        let tail: f64 = sig[5..].iter().map(|v| v * v).sum();
        prop_assert!(spec.tail_trace(5) >= tail * (1.0 - 1e-9));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn optimizer_is_deterministic(seed in 0u64..1_000_000) {
        let s = trig_system(MultiIndexSet::l1_ball(2, 1).unwrap());
        let cfg = OptimizerConfig { max_restarts: 2, max_iters: 300, seed, ..Default::default() };
        let a = optimize_frobenius(&s, 9, &cfg).unwrap();
        let b = optimize_frobenius(&s, 9, &cfg).unwrap();
        prop_assert_eq!(&a.measure, &b.measure);
        prop_assert_eq!(a.mz_constant, mz_constant(&s, &a.measure).unwrap());
        prop_assert!((a.measure.total_weight() - 1.0).abs() <= 1e-12);
    }
}
