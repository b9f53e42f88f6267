//! End-to-end benchmarks of the classification pipeline stages.

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use trilat::analysis::moufang_check;
use trilat::complexbuild::{count_splittings, hjelmslev_plane};
use trilat::diffmats::{census, DiffMatrix};
use trilat::locfield::hensel_solve;
use trilat::presentations::{bt_matrix, derived_h1, h1};

fn exotic_q2() -> DiffMatrix {
    DiffMatrix::new(2, vec![[0, 0, 0], [1, 1, 3], [3, 3, 1]]).unwrap()
}

fn bench_census(c: &mut Criterion) {
    let mut g = c.benchmark_group("census");
    g.sample_size(10);
    for q in [2u64, 3, 4] {
        g.bench_function(format!("q{q}"), |b| b.iter(|| census(q).unwrap().len()));
    }
    g.finish();
}

fn bench_homology(c: &mut Criterion) {
    let mut g = c.benchmark_group("homology");
    let classes = census(3).unwrap();
    g.bench_function("h1_all_q3", |b| {
        b.iter(|| {
            classes
                .iter()
                .map(|cl| h1(&cl.based).unwrap().order())
                .sum::<u64>()
        })
    });
    g.bench_function("derived_h1_all_q3", |b| {
        b.iter(|| {
            classes
                .iter()
                .map(|cl| derived_h1(&cl.based).unwrap())
                .count()
        })
    });
    g.finish();
}

fn bench_planes(c: &mut Criterion) {
    let mut g = c.benchmark_group("planes");
    g.sample_size(10);
    let e = exotic_q2();
    g.bench_function("hjelmslev_level2_q2", |b| {
        b.iter(|| hjelmslev_plane(&e, 0, 2).unwrap().points().len())
    });
    g.bench_function("moufang_level2_q2", |b| {
        b.iter_batched(
            || hjelmslev_plane(&e, 0, 2).unwrap(),
            |p| moufang_check(&p).unwrap(),
            BatchSize::SmallInput,
        )
    });
    g.bench_function("splittings_q2", |b| {
        b.iter(|| count_splittings(&e, 2).unwrap())
    });
    g.finish();
}

fn bench_solver(c: &mut Criterion) {
    let mut g = c.benchmark_group("solver");
    g.sample_size(10);
    let e = bt_matrix(2).unwrap();
    g.bench_function("hensel_q2_prec6", |b| {
        b.iter(|| hensel_solve(&e, 6).unwrap().solutions.len())
    });
    g.finish();
}

criterion_group!(benches, bench_census, bench_homology, bench_planes, bench_solver);
criterion_main!(benches);
