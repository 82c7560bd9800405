//! Labeling and normal-equation accumulation on one worker versus the full
//! pool. Build with `--no-default-features` to time the sequential fallback
//! instead of a one-thread rayon pool.

use std::collections::BTreeMap;
use std::hint::black_box;

use alloop_core::elements::mass_table;
use alloop_core::frame::LabeledFrame;
use alloop_core::oracle::{label_frames, OracleKind, OracleSpec, PairParams};
use alloop_core::parallel::{with_workers, worker_count};
use alloop_core::potential::{accumulate, BasisSettings, DescriptorBasis};
use alloop_core::structgen::build_packed;
use alloop_core::AtomicConfiguration;
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn spec() -> OracleSpec {
    let mut pairs = BTreeMap::new();
    pairs.insert("Cu-Cu".into(), PairParams::LennardJones { epsilon: 0.15, sigma: 2.0 });
    pairs.insert("Ar-Ar".into(), PairParams::LennardJones { epsilon: 0.03, sigma: 2.2 });
    OracleSpec { kind: OracleKind::LennardJones, pairs, cutoff: 6.0, shift: true }
}

fn configs(n: usize) -> Vec<AtomicConfiguration> {
    let masses = mass_table(["Cu", "Ar"], &BTreeMap::new()).unwrap();
    let counts: BTreeMap<String, usize> = [("Cu".to_string(), 50), ("Ar".to_string(), 50)].into();
    (0..n).map(|k| build_packed(&counts, 3.0, 2.0, &masses, k as u64, 20_000, None).unwrap()).collect()
}

fn pools() -> Vec<(&'static str, usize)> {
    vec![("one_worker", 1), ("full_pool", worker_count())]
}

fn bench(c: &mut Criterion) {
    let cs = configs(32);
    let s = spec();
    let mut g = c.benchmark_group("label_frames");
    g.sample_size(10);
    for (name, threads) in pools() {
        g.bench_with_input(BenchmarkId::new(name, threads), &threads, |b, &t| {
            b.iter(|| with_workers(t, || black_box(label_frames("b", &cs, &s, vec![]).unwrap())))
        });
    }
    g.finish();

    let ds = label_frames("b", &cs, &s, vec![]).unwrap();
    let frames: Vec<&LabeledFrame> = ds.frames.iter().collect();
    let basis = DescriptorBasis::new(&["Ar".to_string(), "Cu".to_string()], &BasisSettings::default()).unwrap();
    let mut g = c.benchmark_group("accumulate");
    g.sample_size(10);
    for (name, threads) in pools() {
        g.bench_with_input(BenchmarkId::new(name, threads), &threads, |b, &t| {
            b.iter(|| with_workers(t, || black_box(accumulate(&frames, &basis, 10.0).unwrap())))
        });
    }
    g.finish();
}

criterion_group!(benches, bench);
criterion_main!(benches);
