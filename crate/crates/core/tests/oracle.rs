mod common;

use alloop_core::geometry::{Cell, Vec3};
use alloop_core::oracle::{label_frames, oracle_energy_forces, OracleSpec};
use alloop_core::frame::DatasetStats;
use common::*;
use proptest::prelude::*;

fn energy(spec: &OracleSpec) -> impl Fn(&alloop_core::AtomicConfiguration) -> f64 + '_ {
    move |c| oracle_energy_forces(c, spec).unwrap().energy
}

#[test]
fn lj_forces_match_finite_differences_32_atoms() {
    let spec = binary_lj();
    let mut r = rng(1);
    for _ in 0..10 {
        let c = random_config(&mut r, Cell::cubic(13.0), &["Cu", "Ar"], 32, 1.9);
        let f = oracle_energy_forces(&c, &spec).unwrap();
        let fd = fd_forces(&c, 1e-5, energy(&spec));
        assert!(rel_diff(&fd, &f.forces) < 1e-6, "{}", rel_diff(&fd, &f.forces));
    }
}

#[test]
fn morse_forces_match_finite_differences_triclinic() {
    let spec = binary_morse();
    let mut r = rng(2);
    for _ in 0..5 {
        let cell = random_cell(&mut r);
        // Cutoff 6 needs enumeration for the smaller random cells.
        let c = random_config(&mut r, cell, &["Cu", "Ar"], 32, 1.8);
        let f = oracle_energy_forces(&c, &spec).unwrap();
        let fd = fd_forces(&c, 1e-5, energy(&spec));
        assert!(rel_diff(&fd, &f.forces) < 1e-6);
    }
}

#[test]
fn newton_third_law_holds() {
    let spec = binary_lj();
    let mut r = rng(3);
    for _ in 0..10 {
        let cell = random_cell(&mut r);
        let c = random_config(&mut r, cell, &["Cu", "Ar"], 30, 1.8);
        let f = oracle_energy_forces(&c, &spec).unwrap();
        let total: Vec3 = f.forces.iter().sum();
        assert!(total.norm() < 1e-9, "{}", total.norm());
    }
}

#[test]
fn shifted_and_unshifted_forces_agree() {
    let spec = binary_lj();
    let unshifted = OracleSpec { shift: false, ..binary_lj() };
    let mut r = rng(4);
    let c = random_config(&mut r, Cell::cubic(13.0), &["Cu", "Ar"], 32, 1.9);
    let a = oracle_energy_forces(&c, &spec).unwrap();
    let b = oracle_energy_forces(&c, &unshifted).unwrap();
    assert_ne!(a.energy, b.energy);
    for (x, y) in a.forces.iter().zip(&b.forces) {
        assert_eq!(x, y);
    }
}

#[test]
fn stats_match_individual_labels_100_frames() {
    let spec = argon();
    let mut r = rng(5);
    let configs: Vec<_> = (0..100).map(|_| random_config(&mut r, Cell::cubic(18.0), &["Ar"], 12, 3.0)).collect();
    let ds = label_frames("d", &configs, &spec, vec![]).unwrap();
    assert_eq!(ds.len(), 100);
    let singles: Vec<_> = configs.iter().map(|c| oracle_energy_forces(c, &spec).unwrap()).collect();
    for (a, b) in ds.frames.iter().zip(&singles) {
        assert_eq!(a.energy, b.energy);
    }
    assert_eq!(ds.stats(), &DatasetStats::of(&singles));
}

#[test]
fn single_frame_dataset_has_degenerate_range() {
    let mut r = rng(6);
    let c = random_config(&mut r, Cell::cubic(18.0), &["Ar"], 8, 3.0);
    let ds = label_frames("d", &[c], &argon(), vec![]).unwrap();
    assert_eq!(ds.stats().frame_count, 1);
    assert_eq!(ds.stats().energy_per_atom_min, ds.stats().energy_per_atom_max);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]
    #[test]
    fn rigid_translation_keeps_energy(seed in 0u64..1000, dx in -20.0f64..20.0, dy in -20.0f64..20.0, dz in -20.0f64..20.0) {
        let spec = binary_lj();
        let mut r = rng(seed);
        let cell = random_cell(&mut r);
        let c = random_config(&mut r, cell, &["Cu", "Ar"], 20, 1.8);
        let mut moved = c.clone();
        moved.translate(&Vec3::new(dx, dy, dz));
        let e0 = oracle_energy_forces(&c, &spec).unwrap().energy;
        let e1 = oracle_energy_forces(&moved, &spec).unwrap().energy;
        prop_assert!((e0 - e1).abs() < 1e-10);
    }
}
