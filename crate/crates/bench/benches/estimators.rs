use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use onebit_bench::{heavy_tailed_prior, sample_patterns, scalar_system};
use onebit_core::channel::{optimal_pilots, simulate};
use onebit_core::mvn::{mvn_rectangle, RectangleProblem};
use onebit_core::stats::random_covariance;
use onebit_core::{BussgangQuantities, GmmPrior, LmmseEstimator, NumericCme, SystemModel};

fn vector_prior(n: usize) -> GmmPrior {
    let covs = (0..3).map(|k| random_covariance(n, 1.0, 100 + k).unwrap()).collect();
    GmmPrior::new(vec![0.5, 0.3, 0.2], covs).unwrap()
}

fn bussgang(c: &mut Criterion) {
    let mut group = c.benchmark_group("bussgang_quantities");
    for (n, m) in [(4, 4), (16, 8), (32, 8)] {
        let prior = vector_prior(n);
        let system = SystemModel::new(optimal_pilots(m), 0.1, n).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(format!("N{n}_M{m}")), &(), |b, _| {
            b.iter(|| BussgangQuantities::compute(black_box(&prior), black_box(&system)).unwrap())
        });
    }
    group.finish();
}

fn lmmse_apply(c: &mut Criterion) {
    let prior = vector_prior(16);
    let system = SystemModel::new(optimal_pilots(8), 0.1, 16).unwrap();
    let est = LmmseEstimator::new(&prior, &system).unwrap();
    let obs = simulate(&prior, &system, 64, 1).unwrap();
    c.bench_function("lmmse_apply_N16_M8", |b| {
        b.iter(|| {
            for o in &obs {
                black_box(est.estimate(&o.r).unwrap());
            }
        })
    });
}

fn numeric_cme(c: &mut Criterion) {
    let prior = heavy_tailed_prior();
    let mut build = c.benchmark_group("numeric_cme_build");
    build.sample_size(10);
    for (m, snr) in [(1, 10.0), (5, 10.0), (10, 30.0)] {
        let system = scalar_system(m, snr);
        build.bench_with_input(BenchmarkId::from_parameter(format!("M{m}_{snr}dB")), &(), |b, _| {
            b.iter(|| NumericCme::new(black_box(&prior), &system, 16).unwrap())
        });
    }
    build.finish();

    let mut eval = c.benchmark_group("numeric_cme_estimate");
    for (m, snr) in [(1, 10.0), (5, 10.0), (10, 30.0)] {
        let system = scalar_system(m, snr);
        let cme = NumericCme::new(&prior, &system, 16).unwrap();
        let patterns = sample_patterns(&prior, &system, 8);
        eval.bench_with_input(BenchmarkId::from_parameter(format!("M{m}_{snr}dB")), &(), |b, _| {
            b.iter(|| {
                for r in &patterns {
                    black_box(cme.estimate(r).unwrap());
                }
            })
        });
    }
    eval.finish();
}

fn orthant(c: &mut Criterion) {
    let mut group = c.benchmark_group("mvn_orthant");
    group.sample_size(20);
    for d in [4, 8, 16] {
        let cov = random_covariance(d, 1.0, 7).unwrap();
        let real = nalgebra_real(cov.matrix());
        let problem = RectangleProblem {
            cov: real,
            lower: nalgebra::DVector::zeros(d),
            upper: nalgebra::DVector::from_element(d, f64::INFINITY),
            samples: 1 << 12,
            seed: 3,
        };
        group.bench_with_input(BenchmarkId::from_parameter(d), &(), |b, _| {
            b.iter(|| mvn_rectangle(black_box(&problem)).unwrap())
        });
    }
    group.finish();
}

fn nalgebra_real(c: &onebit_core::CMatrix) -> nalgebra::DMatrix<f64> {
    c.map(|z| z.re)
}

criterion_group!(benches, bussgang, lmmse_apply, numeric_cme, orthant);
criterion_main!(benches);
