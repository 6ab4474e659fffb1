use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use nalgebra::DVector;

use taultn_bench::{ring, two_neuron};
use taultn_core::cert::{check_certificate, CertSearchConfig};
use taultn_core::equilibrium::EnumerationConfig;
use taultn_core::integrate::{HssOptions, PdsOptions, TauOptions};
use taultn_core::net::tau_ltn_field;
use taultn_core::{
    find_certificate, integrate_hss, integrate_pds, integrate_tau_ltn, solve_by_enumeration,
};

fn fields(c: &mut Criterion) {
    let spec = ring(8);
    let x = spec.d().map(|d| 0.3 / d);
    let mut g = c.benchmark_group("field");
    for tau in [1e-4, 1.0, 1e4] {
        g.bench_with_input(BenchmarkId::new("tau_ltn", tau), &tau, |b, &t| {
            b.iter(|| tau_ltn_field(&spec, black_box(t), black_box(&x)).unwrap())
        });
    }
    g.finish();
}

fn certificates(c: &mut Criterion) {
    let mut g = c.benchmark_group("certificate");
    for n in [2, 5, 10] {
        let spec = ring(n);
        let lam = vec![1.0; n];
        g.bench_with_input(BenchmarkId::new("check", n), &n, |b, _| {
            b.iter(|| check_certificate(spec.a(), black_box(&lam)).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("search", n), &n, |b, _| {
            b.iter(|| find_certificate(spec.a(), &CertSearchConfig::default()).unwrap())
        });
    }
    g.finish();
}

fn equilibria(c: &mut Criterion) {
    let mut g = c.benchmark_group("enumeration");
    g.sample_size(10);
    for n in [3, 5, 7] {
        let spec = ring(n);
        g.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| solve_by_enumeration(&spec, &EnumerationConfig::default()).unwrap())
        });
    }
    g.finish();
}

fn integrators(c: &mut Criterion) {
    let spec = two_neuron();
    let x0 = DVector::from_vec(vec![0.0, 1.0]);
    let mut g = c.benchmark_group("integrate_10");
    g.sample_size(10);
    g.bench_function("pds", |b| {
        b.iter(|| integrate_pds(&spec, &x0, 10.0, &PdsOptions::default()).unwrap())
    });
    g.bench_function("hss", |b| {
        b.iter(|| integrate_hss(&spec, &x0, 10.0, &HssOptions::default()).unwrap())
    });
    g.bench_function("tau_1", |b| {
        b.iter(|| integrate_tau_ltn(&spec, 1.0, &x0, 10.0, &TauOptions::default()).unwrap())
    });
    g.finish();
}

criterion_group!(benches, fields, certificates, equilibria, integrators);
criterion_main!(benches);
