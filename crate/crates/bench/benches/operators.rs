use std::hint::black_box;
use std::sync::Arc;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use inls_core::evolution::{cn_step, step};
use inls_core::ground_state::{solve_with, Model, SolverOptions};
use inls_core::radial_grid::{factorize_k, riesz_kernel};
use inls_core::{make_grid, validate_spec, Complex64, KOperator, ProblemSpec, RadialField};

fn s1() -> ProblemSpec {
    validate_spec(ProblemSpec::choquard(1, 3, 0.0, 0.5, 2.0, 2.1)).unwrap()
}

fn s2() -> ProblemSpec {
    validate_spec(ProblemSpec::local(2, 5, 0.0, 0.5, 1.7)).unwrap()
}

fn operators(c: &mut Criterion) {
    let mut group = c.benchmark_group("apply");
    for m in [256usize, 1024] {
        for (name, spec) in [("K s=1", s1()), ("K s=2", s2())] {
            let grid = Arc::new(make_grid(m, 15.0, spec.n).unwrap());
            let op = KOperator::new(&spec, grid.clone());
            let u: Vec<f64> = grid.nodes.iter().map(|r| (-r * r).exp()).collect();
            group.bench_with_input(BenchmarkId::new(name, m), &u, |b, u| b.iter(|| op.apply_real(black_box(u))));
        }
        let grid = make_grid(m, 15.0, 3).unwrap();
        let kernel = riesz_kernel(&grid, 2.0).unwrap();
        let f: Vec<f64> = grid.nodes.iter().map(|r| (-r * r).exp()).collect();
        group.bench_with_input(BenchmarkId::new("riesz", m), &f, |b, f| b.iter(|| kernel.apply(black_box(f))));
    }
    group.finish();

    let mut group = c.benchmark_group("build");
    group.sample_size(10);
    for m in [256usize, 512] {
        let grid = make_grid(m, 15.0, 3).unwrap();
        group.bench_with_input(BenchmarkId::new("riesz kernel", m), &grid, |b, g| {
            b.iter(|| riesz_kernel(black_box(g), 2.0).unwrap())
        });
        let grid = Arc::new(grid);
        group.bench_with_input(BenchmarkId::new("K eigendecomposition", m), &grid, |b, g| {
            b.iter(|| factorize_k(&s1(), g.clone()).unwrap())
        });
    }
    group.finish();
}

fn time_steps(c: &mut Criterion) {
    let mut group = c.benchmark_group("step");
    for m in [256usize, 1024] {
        let model = Model::new(&s1(), Arc::new(make_grid(m, 15.0, 3).unwrap())).unwrap();
        let u = RadialField::from_fn(model.grid().clone(), |r| Complex64::new((-r * r).exp(), 0.1 * (-r).exp()));
        group.bench_with_input(BenchmarkId::new("crank-nicolson", m), &u, |b, u| {
            b.iter(|| cn_step(&model, black_box(u), 1e-3))
        });
        group.bench_with_input(BenchmarkId::new("strang", m), &u, |b, u| b.iter(|| step(&model, black_box(u), 1e-3)));
    }
    group.finish();
}

fn ground_states(c: &mut Criterion) {
    let mut group = c.benchmark_group("ground state");
    group.sample_size(10);
    for (name, spec) in [("s=1 choquard", s1()), ("s=2 local", s2())] {
        let model = Model::new(&spec, Arc::new(make_grid(256, 15.0, spec.n).unwrap())).unwrap();
        group.bench_function(BenchmarkId::new(name, 256), |b| {
            b.iter(|| solve_with(&model, None, &SolverOptions::default()).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, operators, time_steps, ground_states);
criterion_main!(benches);
