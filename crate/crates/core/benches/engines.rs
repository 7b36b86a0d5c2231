//! Benchmarks of the data-parallel engine cores.
//!
//! With the default `parallel` feature the engine benches run under rayon
//! pools of 1, 2, 4 and 8 threads; built with `--no-default-features` the
//! same benchmark ids measure the sequential fallback, so the two builds can
//! be compared with criterion's baseline workflow:
//!
//! ```text
//! cargo bench -p realopt-core -- --save-baseline parallel
//! cargo bench -p realopt-core --no-default-features -- --baseline parallel
//! ```
//!
//! The `map_indexed` group compares the parallel map against the sequential
//! map directly within one build.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};

use realopt_core::{
    exec, lsm_value, mad_calibrate, npv_paths, simulate_paths, CashFlowSpec, CompoundingMode,
    FactorParams, Horizon, LsmConfig, RatePair,
};

fn spec() -> CashFlowSpec {
    CashFlowSpec::two_factor(
        FactorParams { initial: 5.0, drift: 0.3, vol: 0.35, loading: 0.6 },
        FactorParams { initial: 4.8, drift: 0.25, vol: 0.25, loading: 0.3 },
    )
    .unwrap()
}

fn lsm_pipeline(n_paths: usize) -> f64 {
    let spec = spec();
    let horizon = Horizon::new(5.0, 20).unwrap();
    let rates = RatePair::new(0.22, 0.30, CompoundingMode::Continuous).unwrap();
    let paths = simulate_paths(&spec, &horizon, n_paths, 7).unwrap();
    let npv = npv_paths(&paths, &rates, spec.drifts());
    lsm_value(&npv, &LsmConfig::default()).unwrap().option_value
}

fn with_pools(c: &mut Criterion, group_name: &str, mut f: impl FnMut() -> f64 + Send) {
    let mut group = c.benchmark_group(group_name);
    group.sample_size(10);
    #[cfg(feature = "parallel")]
    for threads in [1usize, 2, 4, 8] {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap();
        group.bench_function(format!("threads-{threads}"), |b| {
            b.iter(|| pool.install(|| black_box(f())))
        });
    }
    #[cfg(not(feature = "parallel"))]
    group.bench_function("sequential", |b| b.iter(|| black_box(f())));
    group.finish();
}

fn bench_simulate(c: &mut Criterion) {
    with_pools(c, "simulate_paths/50k-x-20", || {
        let horizon = Horizon::new(5.0, 20).unwrap();
        let paths = simulate_paths(&spec(), &horizon, 50_000, 7).unwrap();
        paths.revenue(0, 20)
    });
}

fn bench_lsm(c: &mut Criterion) {
    with_pools(c, "lsm_pipeline/50k-x-20", || lsm_pipeline(50_000));
}

fn bench_mad(c: &mut Criterion) {
    with_pools(c, "mad_calibrate/50k-x-5", || {
        mad_calibrate(1.0, 0.2, 0.3, 0.1, 5, 50_000, 7).unwrap().step_vols[0]
    });
}

fn bench_map_indexed(c: &mut Criterion) {
    // a per-index workload comparable to simulating one path
    fn work(i: usize) -> f64 {
        let mut acc = i as f64;
        for k in 0..200 {
            acc = (acc + k as f64 * 1e-3).sin().mul_add(0.5, acc * 0.5);
        }
        acc
    }
    let mut group = c.benchmark_group("map_indexed/100k");
    group.sample_size(10);
    group.bench_function("dispatched", |b| {
        b.iter(|| black_box(exec::map_indexed(100_000, work).last().copied()))
    });
    group.bench_function("sequential", |b| {
        b.iter(|| black_box(exec::map_indexed_sequential(100_000, work).last().copied()))
    });
    group.finish();
}

criterion_group!(benches, bench_simulate, bench_lsm, bench_mad, bench_map_indexed);
criterion_main!(benches);
