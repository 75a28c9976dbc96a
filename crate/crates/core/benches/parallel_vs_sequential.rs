//! Time stepping and diagnostics on a single worker against the full rayon pool.
//!
//! Build with `--no-default-features` to time the plain sequential loops
//! instead; the "1 thread" group then measures the same code twice.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use nlc2_core::config::parse_config;
use nlc2_core::diagnostics::energies;
use nlc2_core::driver::{initial_state, stepper_for};

fn config(nx: usize) -> nlc2_core::config::RunConfig {
    let text = format!(
        "[grid]\nnx = {nx}\n[params]\nM = 10\nN = 100\nviscosity = affine_clamped\n\
         mu_lower = 0.5\nmu_upper = 1.5\nmu_intercept = 0.5\nmu_slope = 0.5\n\
         [scheme]\ndt = 0.001\nt_end = 1\n[ic]\nkind = taylor_green\namplitude = 0.5\ndirector_perturbation = 0.3\n"
    );
    parse_config(&text).expect("bench config")
}

fn pools() -> Vec<(String, rayon::ThreadPool)> {
    // At least two workers, so a single-core machine still shows the overhead.
    let all = rayon::current_num_threads().max(2);
    [1, all]
        .into_iter()
        .map(|n| {
            let label = if n == 1 {
                "1 thread".to_string()
            } else {
                format!("{n} threads")
            };
            (label, rayon::ThreadPoolBuilder::new().num_threads(n).build().unwrap())
        })
        .collect()
}

fn step(c: &mut Criterion) {
    let mut group = c.benchmark_group("imex2_step");
    group.sample_size(20);
    for nx in [64, 128] {
        let cfg = config(nx);
        let sp = cfg.spectral();
        let state = initial_state(&cfg, &sp).unwrap();
        for (label, pool) in pools() {
            group.bench_with_input(BenchmarkId::new(label, nx), &nx, |b, _| {
                pool.install(|| {
                    let mut stepper = stepper_for(&cfg, &sp).unwrap();
                    let (mut s, _) = stepper.step(&state).unwrap();
                    b.iter(|| {
                        let (next, _) = stepper.step(&s).unwrap();
                        s = next;
                    })
                })
            });
        }
    }
    group.finish();
}

fn energy(c: &mut Criterion) {
    let mut group = c.benchmark_group("energies");
    for nx in [64, 128] {
        let cfg = config(nx);
        let sp = cfg.spectral();
        let state = initial_state(&cfg, &sp).unwrap();
        for (label, pool) in pools() {
            group.bench_with_input(BenchmarkId::new(label, nx), &nx, |b, _| {
                pool.install(|| b.iter(|| energies(&sp, &state, &cfg.params)))
            });
        }
    }
    group.finish();
}

criterion_group!(benches, step, energy);
criterion_main!(benches);
