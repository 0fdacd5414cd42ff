// Sequential vs parallel execution on the two hot loops: the blocked
// pairwise K_feat scan and the verification sweep.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use prism_core::oracle::rng::{standard_normal_matrix, stream_rng};
use prism_core::oracle::{run_sweep, Sizes, SweepConfig};
use prism_core::{kfeat_exact_with, Execution, HeadMatrix, KFeatOptions};

const POLICIES: [(&str, Execution); 2] = [
    ("sequential", Execution::Sequential),
    ("parallel", Execution::Parallel),
];

fn kfeat(c: &mut Criterion) {
    let mut group = c.benchmark_group("kfeat_exact");
    group.sample_size(10);
    for vocab in [1024usize, 4096] {
        let h = HeadMatrix::new(standard_normal_matrix(&mut stream_rng(7, 1), 64, vocab)).unwrap();
        for (name, execution) in POLICIES {
            let opts = KFeatOptions { block: 256, execution, ..KFeatOptions::default() };
            group.bench_with_input(BenchmarkId::new(name, vocab), &h, |b, h| {
                b.iter(|| kfeat_exact_with(black_box(h), opts).unwrap())
            });
        }
    }
    group.finish();
}

fn sweep(c: &mut Criterion) {
    let mut group = c.benchmark_group("verify_sweep");
    group.sample_size(10);
    for (name, execution) in POLICIES {
        let cfg = SweepConfig {
            trials: 4,
            sizes: Sizes { n: 128, d: 32, v: 64 },
            execution,
            ..SweepConfig::default()
        };
        group.bench_function(name, |b| b.iter(|| run_sweep(black_box(&cfg)).unwrap()));
    }
    group.finish();
}

criterion_group!(benches, kfeat, sweep);
criterion_main!(benches);
