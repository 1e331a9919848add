use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use vcrw_core::dynamics::closed_loop_dynamics;
use vcrw_core::hybrid::{impact_map, next_foot};
use vcrw_core::sim::StopRule;
use vcrw_core::{default_initial_state, simulate, ContactMode, InitialConditions, ModelParams, SimConfig, Variant};

fn forward_dynamics(c: &mut Criterion) {
    for params in [ModelParams::table_one(Variant::Vcrw1), ModelParams::level_assisted()] {
        let (state, mode) = default_initial_state(&params, &InitialConditions::default()).unwrap();
        c.bench_function(&format!("closed_loop_dynamics/{}", params.variant), |b| {
            b.iter(|| closed_loop_dynamics(black_box(&state), mode, &params).unwrap())
        });
    }
}

fn impact(c: &mut Criterion) {
    let params = ModelParams::table_one(Variant::Vcrw2);
    let (s0, mode) = default_initial_state(&params, &InitialConditions::default()).unwrap();
    let cfg = SimConfig {
        record_stride: usize::MAX,
        stop: Some(StopRule { after_time: 0.0, touchdowns: 1 }),
        ..SimConfig::default()
    };
    let traj = simulate(&params, &s0, mode, &cfg).unwrap();
    let event = traj.touchdowns().next().unwrap();
    let ContactMode::Double { rear, .. } = event.post_mode else { unreachable!() };
    assert_eq!(next_foot(rear), event.foot().unwrap());
    let pre = &event.pre_state;
    c.bench_function("impact_map", |b| b.iter(|| impact_map(black_box(pre), &pre.qd, rear, &params).unwrap()));
}

fn one_second(c: &mut Criterion) {
    let params = ModelParams::table_one(Variant::Vcrw1);
    let (s0, mode) = default_initial_state(&params, &InitialConditions::default()).unwrap();
    let cfg = SimConfig { duration: 1.0, record_stride: usize::MAX, ..SimConfig::default() };
    let mut group = c.benchmark_group("simulate");
    group.sample_size(10);
    group.bench_function("VCRW1 1 s", |b| b.iter(|| simulate(&params, black_box(&s0), mode, &cfg).unwrap()));
    group.finish();
}

criterion_group!(benches, forward_dynamics, impact, one_second);
criterion_main!(benches);
