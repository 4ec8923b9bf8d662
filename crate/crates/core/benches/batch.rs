//! Sequential versus parallel batches of symmetric PEPS contractions.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use gpeps::lattice::LatticeGeometry;
use gpeps::par::{self, Exec};
use gpeps::peps::{contract, symmetric_params_d2, FreeCoefficients, PepsParams};
use gpeps::random;

fn batch(extent: usize, count: usize) -> Vec<PepsParams> {
    let g = LatticeGeometry::new(2, &[extent, extent], 1.0).unwrap();
    (0..count as u64)
        .map(|s| {
            let mut rng = random::rng(s);
            symmetric_params_d2(&g, &FreeCoefficients::random(2, 1, 4, 0.5, &mut rng)).unwrap()
        })
        .collect()
}

fn bench_contractions(c: &mut Criterion) {
    let mut group = c.benchmark_group("contract_batch");
    group.sample_size(10);
    for extent in [4usize, 6] {
        let params = batch(extent, 16);
        for exec in [Exec::Sequential, Exec::Parallel] {
            group.bench_with_input(
                BenchmarkId::new(format!("{exec:?}"), format!("{extent}x{extent}")),
                &params,
                |b, params| {
                    b.iter(|| par::map(exec, black_box(params), |p| contract(p).unwrap().scalar))
                },
            );
        }
    }
    group.finish();
}

criterion_group!(benches, bench_contractions);
criterion_main!(benches);
