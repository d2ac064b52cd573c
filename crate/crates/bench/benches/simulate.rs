use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use wta_bench::Fixture;
use wta_core::dynamics::{simulate_pattern, NoPlasticity};
use wta_core::plasticity::{rewire_after_pattern, FitnessLearner, FitnessTable, RewireConfig};
use wta_core::rng::stream;
use wta_core::SimOptions;

fn simulate(c: &mut Criterion) {
    let mut group = c.benchmark_group("simulate_pattern");
    group.sample_size(20);
    for neurons in [22usize, 66] {
        let fx = Fixture::new(neurons, 1);
        group.bench_with_input(BenchmarkId::new("no_plasticity", neurons), &fx, |b, fx| {
            b.iter(|| {
                simulate_pattern(
                    &fx.network(),
                    &fx.pattern,
                    &SimOptions::default(),
                    &mut NoPlasticity,
                )
                .unwrap()
            })
        });
        group.bench_with_input(BenchmarkId::new("fitness", neurons), &fx, |b, fx| {
            let mut table = FitnessTable::new(fx.wiring.geometry());
            b.iter(|| {
                let mut hooks = FitnessLearner {
                    table: &mut table,
                    cc: None,
                };
                simulate_pattern(
                    &fx.network(),
                    &fx.pattern,
                    &SimOptions::default(),
                    &mut hooks,
                )
                .unwrap()
            })
        });
    }
    group.finish();
}

fn rewire(c: &mut Criterion) {
    let fx = Fixture::new(66, 2);
    let mut table = FitnessTable::new(fx.wiring.geometry());
    let (log, _) = simulate_pattern(
        &fx.network(),
        &fx.pattern,
        &SimOptions::default(),
        &mut FitnessLearner {
            table: &mut table,
            cc: None,
        },
    )
    .unwrap();
    c.bench_function("rewire_after_pattern", |b| {
        let mut rng = stream(1, "bench-rewire", 0);
        b.iter(|| {
            let mut w = fx.wiring.clone();
            rewire_after_pattern(&mut w, &table, &log, &RewireConfig { n_r: 25 }, &mut rng).unwrap()
        })
    });
}

criterion_group!(benches, simulate, rewire);
criterion_main!(benches);
