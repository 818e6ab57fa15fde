use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use revgn_core::linalg::{pseudoinverse, svd};
use revgn_core::losses::{LossKind, TargetBatch};
use revgn_core::optim::{gn_step, GnConfig};
use revgn_core::revnet::{init, InitScheme};
use revgn_core::{Mat, PinvPolicy};

fn random(rows: usize, cols: usize, seed: u64) -> Mat {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Mat::from_fn(rows, cols, |_, _| rng.gen_range(-1.0..1.0))
}

fn gemm(c: &mut Criterion) {
    let mut g = c.benchmark_group("gemm");
    for n in [64, 256, 512] {
        let (a, b) = (random(n, n, 1), random(n, n, 2));
        g.bench_with_input(BenchmarkId::new("matmul", n), &n, |bch, _| bch.iter(|| black_box(a.matmul(&b).unwrap())));
        g.bench_with_input(BenchmarkId::new("t_matmul", n), &n, |bch, _| bch.iter(|| black_box(a.t_matmul(&b).unwrap())));
    }
    g.finish();
}

fn decompositions(c: &mut Criterion) {
    let mut g = c.benchmark_group("svd");
    g.sample_size(10);
    for (m, n) in [(64, 32), (256, 128), (512, 128)] {
        let a = random(m, n, 3);
        g.bench_with_input(BenchmarkId::new("svd", format!("{m}x{n}")), &a, |bch, a| bch.iter(|| black_box(svd(a).unwrap())));
        g.bench_with_input(BenchmarkId::new("pinv", format!("{m}x{n}")), &a, |bch, a| {
            bch.iter(|| black_box(pseudoinverse(a, PinvPolicy::default()).unwrap()))
        });
    }
    g.finish();
}

fn network(c: &mut Criterion) {
    let mut g = c.benchmark_group("revnet");
    g.sample_size(10);
    for (d, dp, n) in [(64, 128, 32), (784, 256, 128)] {
        let model = init(d, dp, 2, 10, 0, InitScheme::default()).unwrap();
        let x = random(d, n, 4);
        let labels: Vec<usize> = (0..n).map(|i| i % 10).collect();
        let y = TargetBatch::Labels(labels);
        let id = format!("d{d}_w{dp}_n{n}");
        g.bench_with_input(BenchmarkId::new("forward", &id), &x, |bch, x| bch.iter(|| black_box(model.forward(x).unwrap())));
        let (_, cache) = model.forward(&x).unwrap();
        let u = random(d, n, 5);
        g.bench_with_input(BenchmarkId::new("vjp", &id), &u, |bch, u| bch.iter(|| black_box(model.vjp(&cache, u).unwrap())));
        g.bench_with_input(BenchmarkId::new("inverse_jvp_all", &id), &u, |bch, u| {
            bch.iter(|| black_box(model.inverse_jvp_all(&cache, u).unwrap()))
        });
        g.bench_with_input(BenchmarkId::new("gn_step", &id), &x, |bch, x| {
            bch.iter(|| {
                let mut m = model.clone();
                black_box(gn_step(&mut m, x, &y, LossKind::CrossEntropy, &GnConfig::new(0.5)).unwrap())
            })
        });
    }
    g.finish();
}

criterion_group!(benches, gemm, decompositions, network);
criterion_main!(benches);
