use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use eslqr_core::dfim::DfimPreset;
use eslqr_core::esc::{esc_step, initial_state, SimulatedOracle};
use eslqr_core::lti_cost::{
    closed_loop, exact_gradient, solve_discrete_lyapunov, truncated_cost, CostSpec, LtiPlant,
};
use eslqr_core::riccati::solve_dare;
use nalgebra::DMatrix;

fn dfim() -> (LtiPlant, CostSpec, DMatrix<f64>) {
    let preset = DfimPreset::default();
    let plant = preset.plant().unwrap();
    let cost = preset.cost().unwrap();
    let k0 = preset.initial_gain(&plant).unwrap();
    (plant, cost, k0)
}

fn truncated(c: &mut Criterion) {
    let (plant, cost, k0) = dfim();
    let mut group = c.benchmark_group("truncated_cost");
    for horizon in [20usize, 100] {
        group.bench_with_input(BenchmarkId::from_parameter(horizon), &horizon, |b, &t| {
            b.iter(|| truncated_cost(&plant, &cost, black_box(&k0), t).unwrap())
        });
    }
    group.finish();
}

fn loop_step(c: &mut Criterion) {
    let preset = DfimPreset::default();
    let plant = preset.plant().unwrap();
    let params = preset.esc_params(&plant).unwrap();
    let mut oracle = SimulatedOracle::new(plant, preset.cost().unwrap(), params.horizon).unwrap();
    let state = initial_state(&params, &mut oracle).unwrap();
    c.bench_function("esc_step/dfim", |b| {
        b.iter(|| esc_step(black_box(&state), &mut oracle, &params).unwrap())
    });
}

fn lyapunov(c: &mut Criterion) {
    let mut group = c.benchmark_group("lyapunov");
    for n in [4usize, 8, 24] {
        let plant = LtiPlant::random(n, 2, 1).unwrap();
        let cost = CostSpec::identity(n, 2);
        let k = solve_dare(&plant, &cost).unwrap().k_star;
        let m = closed_loop(&plant, &k).unwrap();
        let weight = cost.closed_loop_weight(&k);
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| solve_discrete_lyapunov(black_box(&m), &weight).unwrap())
        });
    }
    group.finish();
    let (plant, cost, k0) = dfim();
    c.bench_function("exact_gradient/dfim", |b| {
        b.iter(|| exact_gradient(&plant, &cost, black_box(&k0)).unwrap())
    });
}

fn dare(c: &mut Criterion) {
    let (plant, cost, _) = dfim();
    c.bench_function("solve_dare/dfim", |b| {
        b.iter(|| solve_dare(black_box(&plant), &cost).unwrap())
    });
}

criterion_group!(benches, truncated, loop_step, lyapunov, dare);
criterion_main!(benches);
