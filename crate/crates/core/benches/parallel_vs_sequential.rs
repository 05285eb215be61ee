use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use tsvar_core::calculus::Trajectory;
use tsvar_core::solver::{parse_basis, solve_candidate, SolveOptions};
use tsvar_core::variational::{default_competitors, transversality_scan, weak_maximality_test};
use tsvar_core::{Execution, Lagrangian, Problem, TimeScale};

fn example1() -> Problem {
    Problem::new(
        TimeScale::integer(0.0).unwrap(),
        vec![0.0, 1.0],
        Lagrangian::parse("-(u2)^2", 2).unwrap(),
    )
    .unwrap()
}

const MODES: [(&str, Execution); 2] = [
    ("sequential", Execution::Sequential),
    ("parallel", Execution::Parallel),
];

fn battery(c: &mut Criterion) {
    let p = example1();
    let grid = p.t_grid().unwrap();
    let xstar = Trajectory::parse("t").unwrap();
    let competitors = default_competitors(&p, &xstar).unwrap();
    let mut group = c.benchmark_group("weak_maximality_battery");
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| weak_maximality_test(&p, &xstar, black_box(&competitors), &grid, exec).unwrap())
        });
    }
    group.finish();
}

fn scan(c: &mut Criterion) {
    let p = example1();
    let grid = p.t_grid().unwrap();
    let x = Trajectory::parse("t^3+t").unwrap();
    let mut group = c.benchmark_group("transversality_scan");
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| transversality_scan(&p, black_box(&x), 2, &grid, exec).unwrap())
        });
    }
    group.finish();
}

fn collocation(c: &mut Criterion) {
    let p = example1();
    let basis = parse_basis(&["t^3", "t^2", "t", "1"]).unwrap();
    let mut group = c.benchmark_group("solve_candidate");
    group.sample_size(20);
    for (name, exec) in MODES {
        let opts = SolveOptions {
            exec,
            ..SolveOptions::default()
        };
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| solve_candidate(&p, black_box(&basis), &opts).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, battery, scan, collocation);
criterion_main!(benches);
