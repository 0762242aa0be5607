use std::hint::black_box;

use armlab::crossing::{bridge_extremes, simulate_threshold, Variant};
use armlab::maps::{halfstrip_f, halfstrip_g, phi_iter};
use armlab::rng::path_rng;
use armlab::{Complex64, DetectConfig, EventSpec, FlowState, Integrator};
use criterion::{criterion_group, criterion_main, Criterion};

fn maps(c: &mut Criterion) {
    let z = Complex64::new(-1.5, 4.0);
    c.bench_function("halfstrip_f", |b| b.iter(|| halfstrip_f(0.0, black_box(z)).unwrap()));
    let w = halfstrip_f(0.0, z).unwrap();
    c.bench_function("halfstrip_g (Newton)", |b| b.iter(|| halfstrip_g(0.0, black_box(w)).unwrap()));
    c.bench_function("phi_iter k=5", |b| b.iter(|| phi_iter(5, black_box(60.0))));
}

fn flow(c: &mut Criterion) {
    c.bench_function("slit step, 2 marks", |b| {
        b.iter_batched(
            || FlowState::new(0.0, &[1.0, 3.0], -1.0, 1e-9).unwrap(),
            |mut s| {
                for k in 0..100 {
                    let w = 0.01 * f64::from(k % 7) - 0.03;
                    s.advance(w, 1e-4, Integrator::Slit).unwrap();
                }
                s
            },
            criterion::BatchSize::SmallInput,
        )
    });
    let mut rng = path_rng(1, 0, 0);
    c.bench_function("bridge_extremes", |b| b.iter(|| bridge_extremes(0.0, black_box(0.3), 0.01, &mut rng)));
}

fn paths(c: &mut Criterion) {
    let spec = EventSpec { variant: Variant::HOdd, n: 1, epsilon: 0.125, x: 1.0, y: 0.0, kappa: 6.0 };
    let cfg = DetectConfig::default();
    let mut g = c.benchmark_group("paths");
    g.sample_size(20);
    let mut i = 0;
    g.bench_function("H_1 threshold path, κ=6", |b| {
        b.iter(|| {
            i += 1;
            let mut rng = path_rng(2, 0, i);
            simulate_threshold(&spec, &cfg, &mut rng).unwrap()
        })
    });
    g.finish();
}

criterion_group!(benches, maps, flow, paths);
criterion_main!(benches);
