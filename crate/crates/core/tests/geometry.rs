mod common;

use alloop_core::geometry::{min_image_distance, min_pair_distance, neighbor_pairs, Cell, ImageMode, Vec3};
use alloop_core::structgen::{build_solid, nearest_neighbor_distance, Lattice};
use common::*;
use proptest::prelude::*;
use rand::RngExt;

fn brute_min(cell: &Cell, a: &Vec3, b: &Vec3, n: i32) -> f64 {
    let mut best = f64::INFINITY;
    for i in -n..=n {
        for j in -n..=n {
            for k in -n..=n {
                let d = b + cell.shift_vector([i, j, k]) - a;
                best = best.min(d.norm());
            }
        }
    }
    best
}

#[test]
fn triclinic_matches_image_enumeration_200_cases() {
    let mut r = rng(11);
    for _ in 0..200 {
        let cell = random_cell(&mut r);
        let a = cell.to_cartesian(&Vec3::new(r.random(), r.random(), r.random())) + Vec3::new(r.random_range(-20.0..20.0), 0.0, 0.0);
        let b = cell.to_cartesian(&Vec3::new(r.random(), r.random(), r.random()));
        let got = min_image_distance(&cell, &a, &b).unwrap();
        let want = brute_min(&cell, &a, &b, 4);
        assert!((got - want).abs() < 1e-9, "{got} vs {want}");
    }
}

#[test]
fn spec_triclinic_case() {
    let h = nalgebra::Matrix3::new(10.0, 0.0, 0.0, 5.0, 8.66, 0.0, 0.0, 0.0, 10.0);
    let cell = Cell::new(h, [true; 3]).unwrap();
    let a = Vec3::zeros();
    let b = Vec3::new(9.5, 0.5, 0.0);
    let got = min_image_distance(&cell, &a, &b).unwrap();
    assert!((got - brute_min(&cell, &a, &b, 2)).abs() < 1e-12);
}

fn brute_pairs(cell: &Cell, pos: &[Vec3], cutoff: f64) -> usize {
    let mut n = 0;
    for i in 0..pos.len() {
        for j in (i + 1)..pos.len() {
            if cell.min_image(&(pos[j] - pos[i])).norm() < cutoff {
                n += 1;
            }
        }
    }
    n
}

#[test]
fn fcc_64_pair_count_matches_double_loop() {
    // 2×2×2 conventional cells of 8 atoms would be 32; use a 2-species rocksalt-free fcc 64-atom cell.
    let c = build_solid(Lattice::Fcc, 3.6, &["Cu".to_string()], [2, 2, 4]).unwrap();
    assert_eq!(c.len(), 64);
    let cutoff = 1.2 * nearest_neighbor_distance(Lattice::Fcc, 3.6);
    let pairs = neighbor_pairs(&c.cell, &c.positions, cutoff, ImageMode::MinimumImage).unwrap();
    assert_eq!(pairs.len(), brute_pairs(&c.cell, &c.positions, cutoff));
    assert_eq!(pairs.len(), 64 * 12 / 2);
}

#[test]
fn enumerate_agrees_with_minimum_image_below_half_width() {
    let mut r = rng(5);
    for _ in 0..20 {
        let cell = random_cell(&mut r);
        let c = random_config(&mut r, cell.clone(), &["Ar"], 20, 0.8);
        let cutoff = 0.9 * cell.half_min_width();
        let mut a: Vec<(usize, usize)> =
            neighbor_pairs(&cell, &c.positions, cutoff, ImageMode::MinimumImage).unwrap().iter().map(|p| (p.i, p.j)).collect();
        let mut b: Vec<(usize, usize)> =
            neighbor_pairs(&cell, &c.positions, cutoff, ImageMode::Enumerate).unwrap().iter().map(|p| (p.i, p.j)).collect();
        a.sort();
        b.sort();
        assert_eq!(a, b);
    }
}

#[test]
fn min_pair_distance_matches_double_loop() {
    let mut r = rng(3);
    for _ in 0..20 {
        let cell = random_cell(&mut r);
        let c = random_config(&mut r, cell.clone(), &["Ar"], 15, 0.3);
        let mut best = f64::INFINITY;
        for i in 0..c.len() {
            for j in (i + 1)..c.len() {
                best = best.min(brute_min(&cell, &c.positions[i], &c.positions[j], 3));
            }
        }
        assert!((min_pair_distance(&cell, &c.positions) - best).abs() < 1e-9);
    }
}

proptest! {
    #[test]
    fn wrapped_positions_lie_in_unit_cell(x in -50.0f64..50.0, y in -50.0f64..50.0, z in -50.0f64..50.0) {
        let cell = Cell::new(nalgebra::Matrix3::new(7.0, 0.0, 0.0, 2.0, 6.0, 0.0, -1.0, 1.5, 8.0), [true; 3]).unwrap();
        let w = cell.wrap(&Vec3::new(x, y, z));
        let f = cell.to_fractional(&w);
        for k in 0..3 {
            prop_assert!((0.0..1.0).contains(&f[k]));
        }
    }

    #[test]
    fn min_image_is_translation_invariant(shift in -30.0f64..30.0) {
        let cell = Cell::cubic(9.0);
        let a = Vec3::new(1.0, 2.0, 3.0);
        let b = Vec3::new(8.5, 0.5, 4.0);
        let s = Vec3::new(shift, -shift, 0.5 * shift);
        let d1 = min_image_distance(&cell, &a, &b).unwrap();
        let d2 = min_image_distance(&cell, &(a + s), &(b + s)).unwrap();
        prop_assert!((d1 - d2).abs() < 1e-9);
    }
}
