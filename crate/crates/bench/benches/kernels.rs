use criterion::{black_box, criterion_group, criterion_main, Criterion};
use deepo_core::presets::{self, Actuation};
use deepo_core::{
    data_grad, online_run, precollect, solve_dare, theta_to_xi, DecoupledPolicy, Mat, NoiseModel,
    OnlineConfig, OnlineState, TrackingPolicy, Vector,
};

fn dare(c: &mut Criterion) {
    let sys = presets::benchmark_system(Actuation::Full);
    let w = presets::benchmark_weights(4, 4);
    c.bench_function("dare_4x4", |b| {
        b.iter(|| solve_dare(black_box(&sys), &w).unwrap())
    });
}

fn gradient(c: &mut Criterion) {
    let sys = presets::benchmark_system(Actuation::Full);
    let w = presets::benchmark_weights(4, 4);
    let mut noise = NoiseModel::new(0.1, 1.0, 1).unwrap().stream();
    let (data, _) = precollect(&sys, &Vector::zeros(4), 200, &mut noise).unwrap();
    let xi = theta_to_xi(&DecoupledPolicy::zeros(4, 4), &data.cov).unwrap();
    c.bench_function("data_grad_4x4", |b| {
        b.iter(|| data_grad(black_box(&data.cov), &w, black_box(&xi)).unwrap())
    });
}

fn online(c: &mut Criterion) {
    let sys = presets::benchmark_system(Actuation::Full);
    let w = presets::benchmark_weights(4, 4);
    let reference = presets::benchmark_reference(200);
    let cfg = OnlineConfig {
        eta: 5e-4,
        steps: 100,
        ..Default::default()
    };
    c.bench_function("online_100_steps", |b| {
        b.iter(|| {
            let mut noise = NoiseModel::new(0.1, 1.0, 2).unwrap().stream();
            let (data, x) = precollect(&sys, &Vector::zeros(4), 9, &mut noise).unwrap();
            let start = TrackingPolicy {
                k: Mat::zeros(4, 4),
                kv: Mat::zeros(4, 4),
            };
            let state = OnlineState::new(start, data, x, noise, &w).unwrap();
            online_run(&sys, &w, &reference, state, &cfg).unwrap()
        })
    });
}

criterion_group!(benches, dare, gradient, online);
criterion_main!(benches);
