use std::hint::black_box;

use adapt_core::adapt::{adapt_run, AdaptConfig};
use adapt_core::ansatz::Ansatz;
use adapt_core::linalg::{eigh, sqrt_psd};
use adapt_core::losses::{loss_and_gradient_at, pool_gradients, LossContext, LossKind};
use adapt_core::model::ProblemInstance;
use adapt_core::pauli::{pool_klocal, PauliString};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn rotation(c: &mut Criterion) {
    let mut g = c.benchmark_group("rotate_in_place");
    for n_total in [4, 8, 12] {
        let inst = ProblemInstance::generate(n_total / 2, 1.0, 1, 0).unwrap();
        let p = PauliString::parse(&format!("X0 Z{}", n_total - 1), n_total).unwrap();
        let mut amps = inst.reference.amplitudes().to_vec();
        g.bench_with_input(BenchmarkId::from_parameter(n_total), &n_total, |b, _| {
            b.iter(|| p.rotate_in_place(black_box(&mut amps), 0.3).unwrap())
        });
    }
    g.finish();
}

fn pool_gradient(c: &mut Criterion) {
    let mut g = c.benchmark_group("pool_gradients");
    g.sample_size(20);
    for n in [2, 3, 4] {
        let inst = ProblemInstance::generate(n, 1.0, 1, 0).unwrap();
        let pool = pool_klocal(2 * n, 2).unwrap();
        let a = Ansatz::new(inst.reference.clone(), n, n).unwrap();
        for kind in LossKind::ALL {
            let ctx = LossContext::from_instance(kind, &inst).unwrap();
            g.bench_function(BenchmarkId::new(kind.name(), n), |b| {
                b.iter(|| pool_gradients(&ctx, black_box(&a), &pool).unwrap())
            });
        }
    }
    g.finish();
}

fn ansatz_gradient(c: &mut Criterion) {
    let n = 3;
    let inst = ProblemInstance::generate(n, 1.0, 1, 0).unwrap();
    let pool = pool_klocal(2 * n, 2).unwrap();
    let gens: Vec<PauliString> = pool.iter().step_by(7).take(20).cloned().collect();
    let params: Vec<f64> = (0..gens.len()).map(|i| 0.1 * i as f64 - 0.9).collect();
    let a = Ansatz::new(inst.reference.clone(), n, n).unwrap().with_generators(gens, params.clone()).unwrap();
    let mut g = c.benchmark_group("loss_and_gradient_20_params");
    for kind in LossKind::ALL {
        let ctx = LossContext::from_instance(kind, &inst).unwrap();
        g.bench_function(kind.name(), |b| b.iter(|| loss_and_gradient_at(&ctx, &a, black_box(&params)).unwrap()));
    }
    g.finish();
}

fn dense(c: &mut Criterion) {
    let mut g = c.benchmark_group("hermitian");
    for n in [3, 4, 5] {
        let rho = ProblemInstance::generate(n, 1.0, 1, 0).unwrap().target_exact;
        g.bench_with_input(BenchmarkId::new("eigh", n), rho.matrix(), |b, m| b.iter(|| eigh(black_box(m)).unwrap()));
        g.bench_with_input(BenchmarkId::new("sqrt_psd", n), rho.matrix(), |b, m| {
            b.iter(|| sqrt_psd(black_box(m)).unwrap())
        });
    }
    g.finish();
}

fn adapt_small(c: &mut Criterion) {
    let mut g = c.benchmark_group("adapt_run_n2");
    g.sample_size(10);
    let inst = ProblemInstance::generate(2, 1.0, 1, 0).unwrap();
    let pool = pool_klocal(4, 2).unwrap();
    for kind in LossKind::ALL {
        let cfg = AdaptConfig::new(pool.clone(), kind);
        g.bench_function(kind.name(), |b| b.iter(|| adapt_run(black_box(&inst), &cfg).unwrap()));
    }
    g.finish();
}

criterion_group!(benches, rotation, pool_gradient, ansatz_gradient, dense, adapt_small);
criterion_main!(benches);
