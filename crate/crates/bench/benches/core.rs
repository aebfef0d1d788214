use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use mzforge_bench::{l1_ball, random_measure};
use mzforge_core::caratheodory::{reduce_conic, AtomizedGramian, DEFAULT_TOL};
use mzforge_core::design::{frobenius_gradient, mz_constant, optimize_frobenius, OptimizerConfig};
use mzforge_core::lattice::minimal_lattice_size;
use mzforge_core::system::{sphere_system, FunctionSystem};
use mzforge_core::MultiIndexSet;

fn gradients(c: &mut Criterion) {
    let mut group = c.benchmark_group("frobenius_gradient");
    for radius in [2, 4, 6] {
        let s = l1_ball(radius);
        let m = random_measure(&s, s.frequencies().unwrap().difference_set().len(), 1);
        group.bench_with_input(BenchmarkId::from_parameter(s.len()), &m, |b, m| b.iter(|| frobenius_gradient(&s, black_box(m)).unwrap()));
    }
    let sphere = sphere_system(4);
    let m = random_measure(&sphere, 81, 2);
    group.bench_function("sphere_m4", |b| b.iter(|| frobenius_gradient(&sphere, black_box(&m)).unwrap()));
    group.finish();
}

fn mz_constants(c: &mut Criterion) {
    let s = l1_ball(4);
    let m = random_measure(&s, 145, 3);
    c.bench_function("mz_constant_l1ball_4", |b| b.iter(|| mz_constant(&s, black_box(&m)).unwrap()));
}

fn reduction(c: &mut Criterion) {
    let s = l1_ball(1);
    let m = random_measure(&s, 200, 4);
    c.bench_function("reduce_conic_200_atoms", |b| {
        b.iter(|| {
            let g = AtomizedGramian::new(&s, m.clone()).unwrap();
            reduce_conic(&g, DEFAULT_TOL).unwrap()
        })
    });
}

fn optimizer(c: &mut Criterion) {
    let s = l1_ball(2);
    let cfg = OptimizerConfig { max_restarts: 1, seed: 1, ..Default::default() };
    let mut group = c.benchmark_group("optimize");
    group.sample_size(10);
    group.bench_function("l1ball_2_exact", |b| b.iter(|| optimize_frobenius(&s, 25, &cfg).unwrap()));
    group.finish();
}

fn lattices(c: &mut Criterion) {
    let set = MultiIndexSet::hyperbolic_cross(2, 8).unwrap();
    let mut group = c.benchmark_group("lattice");
    group.sample_size(10);
    group.bench_function("minimal_hyperbolic_8", |b| b.iter(|| minimal_lattice_size(black_box(&set), 200, None)));
    group.finish();
}

criterion_group!(benches, gradients, mz_constants, reduction, optimizer, lattices);
criterion_main!(benches);
