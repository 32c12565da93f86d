use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use signlink_core::data::{split, synth_graph, SplitFractions};
use signlink_core::model::{init_params, train_step, AdamState, HyperParams, PreparedGraph};
use signlink_core::sparse::CsrMatrix;

fn random_csr(rows: usize, cols: usize, per_row: usize, rng: &mut ChaCha8Rng) -> CsrMatrix {
    let mut t = Vec::with_capacity(rows * per_row);
    for r in 0..rows {
        let mut picked: Vec<usize> = (0..per_row).map(|_| rng.random_range(0..cols)).collect();
        picked.sort_unstable();
        picked.dedup();
        t.extend(
            picked
                .into_iter()
                .map(|c| (r, c, rng.random_range(0.0..1.0))),
        );
    }
    CsrMatrix::from_triplets(rows, cols, &t).unwrap()
}

fn bench_matmul(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut group = c.benchmark_group("csr_matmul");
    for &n in &[2_000usize, 20_000] {
        let a = random_csr(n, n, 10, &mut rng);
        let x = Array2::from_shape_simple_fn((n, 8), || rng.random_range(-1.0..1.0));
        group.bench_with_input(BenchmarkId::new("parallel", n), &n, |b, _| {
            b.iter(|| a.matmul(&x.view()).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("sequential", n), &n, |b, _| {
            b.iter(|| a.matmul_seq(&x.view()).unwrap())
        });
    }
    group.finish();
}

fn bench_epoch(c: &mut Criterion) {
    let (n, m) = (2_000, 20_000);
    let ds = synth_graph(n, n, m, 0.8, 0).unwrap();
    let sp = split(
        &ds,
        SplitFractions {
            train: 1.0,
            val: 0.0,
            test: 0.0,
        },
        0,
    )
    .unwrap();
    let hp = HyperParams {
        layers: 3,
        ..HyperParams::default()
    };
    let prepared = PreparedGraph::with_rank(&sp, n, n, true, 32, None).unwrap();
    let cfg = hp.encoder_config();
    let enc = prepared.encoder(&cfg).unwrap();
    let d = hp.embedding_dim();
    let params = init_params(n, n, d, enc.output_width(d), hp.mlp_hidden, 0);
    let single = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap();

    let mut group = c.benchmark_group("epoch_m20000");
    group.sample_size(10);
    group.bench_function("encode/pool", |b| {
        b.iter(|| enc.encode(&params.x_u.view(), &params.x_v.view()).unwrap())
    });
    group.bench_function("encode/one_thread", |b| {
        single.install(|| b.iter(|| enc.encode(&params.x_u.view(), &params.x_v.view()).unwrap()))
    });
    let step = || {
        let mut p = params.clone();
        let mut adam = AdamState::new(&p);
        train_step(&enc, &mut p, &mut adam, &sp.train, &hp).unwrap()
    };
    group.bench_function("train_step/pool", |b| b.iter(step));
    group.bench_function("train_step/one_thread", |b| single.install(|| b.iter(step)));
    group.finish();
}

criterion_group!(benches, bench_matmul, bench_epoch);
criterion_main!(benches);
