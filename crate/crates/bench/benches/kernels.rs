use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use sgd_clt::ensemble::{run_ensemble, EnsembleConfig, InitDist};
use sgd_clt::lyapunov::{integral_oracle, lift_sigma, msgd_drift, solve_general};
use sgd_clt::optimizers::{Method, StepCoeffs, Stepper};
use sgd_clt::problems::{generate_logistic, make_logistic, make_quadratic, NoiseDistribution, NoiseModel, Oracle};
use sgd_clt::stats::{royston_test, shapiro_wilk};
use sgd_clt::{MethodSpec, Schedule};

fn spd(n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |i, j| if i == j { 2.0 + i as f64 * 0.1 } else { 0.3 / (1.0 + (i as f64 - j as f64).abs()) })
}

fn logistic_oracle() -> Oracle {
    let data = generate_logistic(10, 1000, 0.05, 7).unwrap();
    Oracle::new(make_logistic(data).unwrap(), NoiseModel::MiniBatch { batch_size: 1 }).unwrap()
}

fn steps(c: &mut Criterion) {
    let logistic = logistic_oracle();
    let quad = Oracle::new(
        make_quadratic(DMatrix::identity(2, 2)).unwrap(),
        NoiseModel::additive(DMatrix::identity(2, 2), NoiseDistribution::Gaussian),
    )
    .unwrap();
    let coeffs = StepCoeffs { alpha: 1e-3, alpha_prev: 1e-3, mu: 0.2 };
    for (name, oracle) in [("logistic_d10", &logistic), ("quadratic_d2", &quad)] {
        for method in [Method::Vsgd, Method::MsgdConst, Method::NasgdConst] {
            c.bench_function(&format!("step/{name}/{}", method.name()), |b| {
                let mut stepper = Stepper::new(oracle, method);
                let mut x = oracle.problem.x_star.as_slice().to_vec();
                let mut v = vec![0.0; x.len()];
                let mut rng = ChaCha8Rng::seed_from_u64(0);
                b.iter(|| black_box(stepper.step(&mut x, &mut v, coeffs, &mut rng)))
            });
        }
    }
}

fn lyapunov(c: &mut Criterion) {
    for n in [5, 10, 20] {
        let a = spd(n);
        let s = DMatrix::identity(n, n);
        c.bench_function(&format!("solve_general/n{n}"), |b| b.iter(|| solve_general(black_box(&a), &s, 0.0).unwrap()));
    }
    let a = spd(10);
    let d = msgd_drift(&a, 0.2);
    let s = lift_sigma(&DMatrix::identity(10, 10));
    c.bench_function("solve_general/msgd_n20", |b| b.iter(|| solve_general(black_box(&d), &s, 0.0).unwrap()));
    c.bench_function("integral_oracle/n10", |b| {
        b.iter(|| integral_oracle(black_box(&a), &DMatrix::identity(10, 10)).unwrap())
    });
}

fn normality(c: &mut Criterion) {
    let sample: Vec<f64> = (0..2000).map(|i| ((i as f64 + 0.5) / 2000.0 - 0.5) * 3.0).collect();
    c.bench_function("shapiro_wilk/n2000", |b| b.iter(|| shapiro_wilk(black_box(&sample)).unwrap()));
    let m = DMatrix::from_fn(2000, 10, |i, j| (((i * 7919 + j * 104_729) % 2000) as f64 / 2000.0 - 0.5) * 3.0);
    c.bench_function("royston/n2000_d10", |b| b.iter(|| royston_test(black_box(&m), 0.05).unwrap()));
}

fn ensemble(c: &mut Criterion) {
    let mut cfg = EnsembleConfig::new(logistic_oracle(), Schedule::power_law(0.1, 0.25).unwrap(), MethodSpec::Vsgd);
    cfg.replicas = 64;
    cfg.n_steps = 2_000;
    cfg.checkpoint_every = 1_000;
    cfg.init = InitDist::Point(DVector::zeros(10));
    let w = DMatrix::identity(10, 10);
    let mut group = c.benchmark_group("ensemble");
    group.sample_size(10);
    group.bench_function("logistic_vsgd_64x2000", |b| {
        b.iter_batched(|| cfg.clone(), |cfg| run_ensemble(&cfg, &w).unwrap(), BatchSize::LargeInput)
    });
    group.finish();
}

criterion_group!(benches, steps, lyapunov, normality, ensemble);
criterion_main!(benches);
