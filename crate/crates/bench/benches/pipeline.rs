use std::hint::black_box;
use std::path::PathBuf;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use dualid_bench::{random_cost, random_graph};
use dualid_core::auth::bron_kerbosch;
use dualid_core::mapping::hungarian;
use dualid_core::{run_scenario, ScenarioConfig};

fn assignment(c: &mut Criterion) {
    let mut group = c.benchmark_group("hungarian");
    for k in [8, 32, 128] {
        let cost = random_cost(k, 7);
        group.bench_with_input(BenchmarkId::from_parameter(k), &cost, |b, cost| {
            b.iter(|| hungarian(black_box(cost)))
        });
    }
    group.finish();
}

fn cliques(c: &mut Criterion) {
    let mut group = c.benchmark_group("bron_kerbosch");
    for p in [0.3, 0.5, 0.7] {
        let g = random_graph(24, p, 7);
        group.bench_with_input(BenchmarkId::from_parameter(p), &g, |b, g| {
            b.iter(|| bron_kerbosch(black_box(g)))
        });
    }
    group.finish();
}

fn scenarios(c: &mut Criterion) {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut group = c.benchmark_group("scenario");
    group.sample_size(10);
    for name in ["sybil_direct", "emergency_alert", "formation_10m"] {
        let cfg = ScenarioConfig::from_path(&dir.join(format!("{name}.toml"))).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(name), &cfg, |b, cfg| {
            b.iter(|| run_scenario(black_box(cfg)).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, assignment, cliques, scenarios);
criterion_main!(benches);
