#![allow(dead_code)]

use std::collections::BTreeMap;

use alloop_core::elements::{mass_table, MassTable};
use alloop_core::geometry::{Cell, Vec3};
use alloop_core::oracle::{OracleKind, OracleSpec, PairParams};
use alloop_core::structure::AtomicConfiguration;
use nalgebra::Matrix3;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn argon() -> OracleSpec {
    let mut pairs = BTreeMap::new();
    pairs.insert("Ar-Ar".into(), PairParams::LennardJones { epsilon: 0.0104, sigma: 3.4 });
    OracleSpec { kind: OracleKind::LennardJones, pairs, cutoff: 8.5, shift: true }
}

pub fn binary_lj() -> OracleSpec {
    let mut pairs = BTreeMap::new();
    pairs.insert("Cu-Cu".into(), PairParams::LennardJones { epsilon: 0.15, sigma: 2.0 });
    pairs.insert("Ar-Ar".into(), PairParams::LennardJones { epsilon: 0.03, sigma: 2.2 });
    OracleSpec { kind: OracleKind::LennardJones, pairs, cutoff: 6.0, shift: true }
}

pub fn binary_morse() -> OracleSpec {
    let mut pairs = BTreeMap::new();
    pairs.insert("Cu-Cu".into(), PairParams::Morse { d_e: 0.15, a: 1.6, r_e: 2.3 });
    pairs.insert("Ar-Ar".into(), PairParams::Morse { d_e: 0.03, a: 1.4, r_e: 2.5 });
    OracleSpec { kind: OracleKind::Morse, pairs, cutoff: 6.0, shift: true }
}

pub fn masses() -> MassTable {
    mass_table(["Cu", "Ar", "H"], &BTreeMap::new()).unwrap()
}

/// Random triclinic cell with reasonable widths.
pub fn random_cell(r: &mut ChaCha8Rng) -> Cell {
    loop {
        let a = Vec3::new(r.random_range(6.0..10.0), 0.0, 0.0);
        let b = Vec3::new(r.random_range(-3.0..3.0), r.random_range(6.0..10.0), 0.0);
        let c = Vec3::new(r.random_range(-3.0..3.0), r.random_range(-3.0..3.0), r.random_range(6.0..10.0));
        let h = Matrix3::from_rows(&[a.transpose(), b.transpose(), c.transpose()]);
        if let Ok(cell) = Cell::new(h, [true; 3]) {
            return cell;
        }
    }
}

/// Random configuration with no pair closer than `min_sep` (by rejection).
pub fn random_config(r: &mut ChaCha8Rng, cell: Cell, species: &[&str], n: usize, min_sep: f64) -> AtomicConfiguration {
    let mut pos: Vec<Vec3> = Vec::new();
    let mut tries = 0;
    while pos.len() < n {
        tries += 1;
        assert!(tries < 1_000_000, "could not place atoms");
        let f = Vec3::new(r.random::<f64>(), r.random::<f64>(), r.random::<f64>());
        let p = if cell.is_periodic() { cell.to_cartesian(&f) } else { f * 8.0 };
        if pos.iter().all(|q| cell.min_image(&(p - q)).norm() >= min_sep) {
            pos.push(p);
        }
    }
    let sp = (0..n).map(|i| species[i % species.len()].to_string()).collect();
    AtomicConfiguration::new(cell, sp, pos)
}

/// Relative difference `‖a − b‖ / ‖b‖` over stacked vectors.
pub fn rel_diff(a: &[Vec3], b: &[Vec3]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).norm_squared()).sum::<f64>().sqrt();
    let den: f64 = b.iter().map(|y| y.norm_squared()).sum::<f64>().sqrt();
    num / den.max(1e-300)
}

/// Central finite-difference forces of an energy function.
pub fn fd_forces(config: &AtomicConfiguration, h: f64, energy: impl Fn(&AtomicConfiguration) -> f64) -> Vec<Vec3> {
    let mut out = vec![Vec3::zeros(); config.len()];
    let mut c = config.clone();
    for i in 0..config.len() {
        for k in 0..3 {
            let x0 = c.positions[i][k];
            c.positions[i][k] = x0 + h;
            let ep = energy(&c);
            c.positions[i][k] = x0 - h;
            let em = energy(&c);
            c.positions[i][k] = x0;
            out[i][k] = -(ep - em) / (2.0 * h);
        }
    }
    out
}
