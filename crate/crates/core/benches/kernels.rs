//! Row-parallel kernels against their sequential forms.
//!
//! `cargo bench -p gialab-core` compares them under the default build;
//! with `--no-default-features` both paths run sequentially.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use gialab::gnn::{forward, Mode, Model, ModelSpec};
use gialab::par;
use gialab::sbm::{synth_sbm, SbmParams};
use gialab::{Matrix, Normalization};

fn propagation(c: &mut Criterion) {
    let mut group = c.benchmark_group("propagation");
    for nodes in [500usize, 4000] {
        let ds = synth_sbm(&SbmParams::with_nodes(nodes, 4), 0).unwrap();
        let p = ds.graph.normalize(Normalization::GcnSymmetric);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = Matrix::from_vec(nodes, 64, (0..nodes * 64).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        group.bench_with_input(BenchmarkId::new("parallel", nodes), &x, |b, x| b.iter(|| p.apply(x)));
        group.bench_with_input(BenchmarkId::new("sequential", nodes), &x, |b, x| b.iter(|| p.apply_seq(x)));
    }
    group.finish();
}

fn row_map(c: &mut Criterion) {
    let mut group = c.benchmark_group("rows");
    let cols = 64;
    let mut data = vec![0.5; 4000 * cols];
    let f = |i: usize, row: &mut [f64]| {
        for (j, x) in row.iter_mut().enumerate() {
            *x = (*x + (i * j) as f64 * 1e-6).tanh();
        }
    };
    group.bench_function("parallel", |b| b.iter(|| par::rows_mut(&mut data, cols, f)));
    group.bench_function("sequential", |b| b.iter(|| par::rows_mut_seq(&mut data, cols, f)));
    group.finish();
}

fn inference(c: &mut Criterion) {
    let ds = synth_sbm(&SbmParams::with_nodes(2000, 4), 0).unwrap();
    let model = Model::init(&ModelSpec::gcn_layernorm(), ds.feature_dim(), ds.num_classes, 0).unwrap();
    c.bench_function("gcn_ln forward 2000 nodes", |b| b.iter(|| forward(&model, &ds, Mode::Eval).unwrap()));
}

criterion_group!(benches, propagation, row_map, inference);
criterion_main!(benches);
