use criterion::{black_box, criterion_group, criterion_main, Criterion};
use lerw_core::harmonic::green_function;
use lerw_core::harness::default_domain;
use lerw_core::lerw_discrete::{extract_driving_with, loop_erase, sample_conditioned_walk, sample_lerw, ConditionedWalk, ExtractOptions};
use lerw_core::loewner::capacity::log_capacity;
use lerw_core::loewner::{driving_to_curve, DrivingPath, HullShape};
use lerw_core::{build_grid, C64};

fn harmonic(c: &mut Criterion) {
    let g = build_grid(&default_domain(), 1.0 / 64.0).unwrap();
    c.bench_function("green_function disk 1/64", |b| b.iter(|| green_function(&g, &[], C64::new(0.3, 0.2)).unwrap()));
    c.bench_function("conditioned walk h-transform 1/64", |b| b.iter(|| ConditionedWalk::for_grid(&g).unwrap()));
}

fn discrete(c: &mut Criterion) {
    let g = build_grid(&default_domain(), 1.0 / 64.0).unwrap();
    let walk = ConditionedWalk::for_grid(&g).unwrap();
    let mut seed = 0u64;
    c.bench_function("sample_lerw 1/64", |b| {
        b.iter(|| {
            seed += 1;
            sample_lerw(&g, &walk, seed).unwrap()
        })
    });
    let raw = sample_conditioned_walk(&g, &walk, g.origin, 7).unwrap();
    c.bench_function("loop_erase", |b| b.iter(|| loop_erase(black_box(&raw))));
    let path = sample_lerw(&g, &walk, 11).unwrap();
    for m in [1usize, 8] {
        let opts = ExtractOptions { stop_radius: Some(0.25), subdivide: m, ..Default::default() };
        c.bench_function(&format!("extract_driving subdivide {m}"), |b| b.iter(|| extract_driving_with(&g, &path, f64::NEG_INFINITY, &opts).unwrap()));
    }
}

fn loewner(c: &mut Criterion) {
    let xi = DrivingPath::from_fn(-4.0, -3.0, 1e-3, |t| 2.0 * t.sin());
    c.bench_function("driving_to_curve 1000 samples", |b| b.iter(|| driving_to_curve(black_box(&xi)).unwrap()));
    let poly: Vec<C64> = (0..200).map(|k| C64::from_polar(k as f64 / 200.0, 3.0 * k as f64 / 200.0)).collect();
    let shape = HullShape::Polyline(poly);
    c.bench_function("log_capacity polyline 96 panels", |b| b.iter(|| log_capacity(&shape, 96).unwrap()));
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = harmonic, discrete, loewner
}
criterion_main!(benches);
