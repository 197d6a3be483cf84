use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use sentry_bench::scenario;
use sentry_core::engine::{run, EngineConfig};
use sentry_core::sim::label_examples;
use sentry_core::{Bounds, EngineState, Mlp, Position, SomGrid, SomParams, TrainConfig, ATTRIBUTES_PER_OBJECT};

fn som(c: &mut Criterion) {
    let bounds = Bounds::new(0.0, 0.0, 8000.0, 8000.0);
    let params = SomParams::default();
    let points: Vec<Position> = (0..64)
        .map(|i| Position::new(125.0 * i as f64, 8000.0 - 110.0 * i as f64))
        .collect();
    c.bench_function("som_train_step_8x8", |b| {
        let mut grid = SomGrid::lattice(8, 8, &bounds).unwrap();
        let mut i = 0;
        b.iter(|| {
            grid.train_step(black_box(points[i % points.len()]), &params);
            i += 1;
        })
    });
    let grid = SomGrid::lattice(8, 8, &bounds).unwrap();
    c.bench_function("som_bmu_8x8", |b| {
        b.iter(|| grid.bmu(black_box(Position::new(3100.0, 4200.0))))
    });
}

fn mlp(c: &mut Criterion) {
    let (cfg, frames, truth) = scenario(3, 6);
    let data = label_examples(&frames, &truth, &cfg.pipeline(8)).unwrap();
    let batch = &data[..16.min(data.len())];
    let mlp = Mlp::new(8 * ATTRIBUTES_PER_OBJECT, 16, 8, 1);
    c.bench_function("mlp_forward_56_16_8", |b| {
        b.iter(|| mlp.forward(black_box(&batch[0].input)).unwrap())
    });
    c.bench_function("mlp_backprop_batch16", |b| {
        b.iter_batched(
            || mlp.clone(),
            |mut m| m.backprop_step(batch, 0.05).unwrap(),
            BatchSize::SmallInput,
        )
    });
    c.bench_function("mlp_train_epoch", |b| {
        let cfg = TrainConfig {
            epochs: 1,
            ..TrainConfig::default()
        };
        b.iter_batched(
            || mlp.clone(),
            |mut m| m.train(&data, &cfg).unwrap(),
            BatchSize::SmallInput,
        )
    });
}

fn engine(c: &mut Criterion) {
    let (cfg, frames, truth) = scenario(5, 6);
    let engine_cfg = EngineConfig::new(cfg.pipeline(8));
    let mlp = Mlp::new(engine_cfg.pipeline.input_dim(), 16, 8, 2);
    let mut group = c.benchmark_group("engine");
    group.sample_size(20);
    group.bench_function("run_181_frames", |b| {
        b.iter(|| {
            let mut state = EngineState::new(engine_cfg.clone(), mlp.clone()).unwrap();
            run(&mut state, black_box(&frames), Some(&truth), false).unwrap()
        })
    });
    group.finish();
}

criterion_group!(benches, som, mlp, engine);
criterion_main!(benches);
