//! Periodic cells, minimum-image distances and neighbor enumeration.
//!
//! Cell vectors are stored as matrix rows. A Cartesian point `r` has
//! fractional coordinates `f` with `r = Hᵀ f`.

use nalgebra::{Matrix3, Vector3};
use thiserror::Error;

pub type Vec3 = Vector3<f64>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("non-finite coordinate in geometry input")]
    NonFinite,
    #[error("cell is singular on a periodic axis")]
    SingularCell,
    #[error("cutoff {cutoff} Å exceeds half the minimum periodic width {half_width} Å; enable image enumeration")]
    CutoffTooLarge { cutoff: f64, half_width: f64 },
    #[error("cutoff must be positive, got {0}")]
    BadCutoff(f64),
}

/// Simulation cell with per-axis periodicity.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    vectors: Matrix3<f64>,
    periodic: [bool; 3],
    inv_t: Matrix3<f64>,
}

impl Cell {
    pub fn new(vectors: Matrix3<f64>, periodic: [bool; 3]) -> Result<Self, GeometryError> {
        if vectors.iter().any(|x| !x.is_finite()) {
            return Err(GeometryError::NonFinite);
        }
        let inv_t = match vectors.transpose().try_inverse() {
            Some(inv) => inv,
            None if periodic.iter().any(|&p| p) => return Err(GeometryError::SingularCell),
            None => Matrix3::zeros(),
        };
        if periodic.iter().any(|&p| p) && vectors.determinant().abs() < 1e-12 {
            return Err(GeometryError::SingularCell);
        }
        Ok(Self { vectors, periodic, inv_t })
    }

    pub fn orthorhombic(a: f64, b: f64, c: f64) -> Self {
        Self::new(Matrix3::from_diagonal(&Vector3::new(a, b, c)), [true; 3])
            .expect("positive orthorhombic lengths")
    }

    pub fn cubic(a: f64) -> Self {
        Self::orthorhombic(a, a, a)
    }

    /// A zero cell with no periodicity, for isolated clusters and molecules.
    pub fn open() -> Self {
        Self { vectors: Matrix3::zeros(), periodic: [false; 3], inv_t: Matrix3::zeros() }
    }

    pub fn vectors(&self) -> &Matrix3<f64> {
        &self.vectors
    }

    pub fn vector(&self, k: usize) -> Vec3 {
        self.vectors.row(k).transpose()
    }

    pub fn periodic(&self) -> [bool; 3] {
        self.periodic
    }

    pub fn is_periodic(&self) -> bool {
        self.periodic.iter().any(|&p| p)
    }

    pub fn fully_periodic(&self) -> bool {
        self.periodic.iter().all(|&p| p)
    }

    pub fn volume(&self) -> f64 {
        self.vectors.determinant().abs()
    }

    pub fn is_orthorhombic(&self) -> bool {
        let m = &self.vectors;
        (0..3).all(|i| (0..3).all(|j| i == j || m[(i, j)] == 0.0))
    }

    pub fn to_fractional(&self, r: &Vec3) -> Vec3 {
        self.inv_t * r
    }

    pub fn to_cartesian(&self, f: &Vec3) -> Vec3 {
        self.vectors.transpose() * f
    }

    /// Cartesian translation for an integer image shift.
    pub fn shift_vector(&self, shift: [i32; 3]) -> Vec3 {
        self.to_cartesian(&Vec3::new(shift[0] as f64, shift[1] as f64, shift[2] as f64))
    }

    /// Perpendicular widths (distance between opposite faces) for each axis.
    pub fn widths(&self) -> [f64; 3] {
        let v = self.volume();
        let a = [self.vector(0), self.vector(1), self.vector(2)];
        [
            v / a[1].cross(&a[2]).norm(),
            v / a[2].cross(&a[0]).norm(),
            v / a[0].cross(&a[1]).norm(),
        ]
    }

    /// Half of the smallest perpendicular width over periodic axes
    /// (infinite for a non-periodic cell).
    pub fn half_min_width(&self) -> f64 {
        let w = self.widths();
        (0..3)
            .filter(|&k| self.periodic[k])
            .map(|k| 0.5 * w[k])
            .fold(f64::INFINITY, f64::min)
    }

    /// Same cell with every vector multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self::new(self.vectors * factor, self.periodic).expect("scaling keeps the cell regular")
    }

    pub fn with_vectors(&self, vectors: Matrix3<f64>) -> Result<Self, GeometryError> {
        Self::new(vectors, self.periodic)
    }

    pub fn with_periodic(&self, periodic: [bool; 3]) -> Result<Self, GeometryError> {
        Self::new(self.vectors, periodic)
    }

    /// Wraps a position into the home cell along periodic axes.
    pub fn wrap(&self, r: &Vec3) -> Vec3 {
        if !self.is_periodic() {
            return *r;
        }
        let mut f = self.to_fractional(r);
        for k in 0..3 {
            if self.periodic[k] {
                f[k] -= f[k].floor();
                if f[k] >= 1.0 {
                    f[k] = 0.0;
                }
            }
        }
        self.to_cartesian(&f)
    }

    /// Candidate image shifts for a fractional separation `f` (already
    /// reduced to [-0.5, 0.5] on periodic axes) whose image could lie
    /// within `radius`.
    fn shift_ranges(&self, f: &Vec3, radius: f64) -> [(i32, i32); 3] {
        let w = self.widths();
        let mut out = [(0, 0); 3];
        for k in 0..3 {
            if self.periodic[k] {
                let span = radius / w[k];
                out[k] = ((-span - f[k]).ceil() as i32, (span - f[k]).floor() as i32);
            }
        }
        out
    }

    /// Shortest image of a displacement vector over all periodic images.
    pub fn min_image(&self, d: &Vec3) -> Vec3 {
        if !self.is_periodic() {
            return *d;
        }
        let mut f = self.to_fractional(d);
        for k in 0..3 {
            if self.periodic[k] {
                f[k] -= f[k].round();
            }
        }
        let base = self.to_cartesian(&f);
        if self.is_orthorhombic() {
            return base;
        }
        let radius = base.norm();
        let ranges = self.shift_ranges(&f, radius);
        let mut best = base;
        let mut best_d2 = base.norm_squared();
        for n0 in ranges[0].0..=ranges[0].1 {
            for n1 in ranges[1].0..=ranges[1].1 {
                for n2 in ranges[2].0..=ranges[2].1 {
                    let g = f + Vec3::new(n0 as f64, n1 as f64, n2 as f64);
                    let v = self.to_cartesian(&g);
                    let d2 = v.norm_squared();
                    if d2 < best_d2 {
                        best_d2 = d2;
                        best = v;
                    }
                }
            }
        }
        best
    }
}

/// Minimum distance between `a` and `b` over all periodic images.
pub fn min_image_distance(cell: &Cell, a: &Vec3, b: &Vec3) -> Result<f64, GeometryError> {
    if a.iter().chain(b.iter()).any(|x| !x.is_finite()) {
        return Err(GeometryError::NonFinite);
    }
    Ok(cell.min_image(&(b - a)).norm())
}

/// How periodic images are treated when the cutoff approaches the cell size.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImageMode {
    /// Single nearest image per pair; requires cutoff ≤ half the minimum width.
    MinimumImage,
    /// Every image within the cutoff, including an atom's own images.
    Enumerate,
}

/// One interacting pair: `vector` points from atom `i` to the `shift` image of `j`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NeighborPair {
    pub i: usize,
    pub j: usize,
    pub shift: [i32; 3],
    pub vector: Vec3,
    pub distance: f64,
}

fn lexicographically_positive(s: [i32; 3]) -> bool {
    s[0] > 0 || (s[0] == 0 && (s[1] > 0 || (s[1] == 0 && s[2] > 0)))
}

/// Enumerates pairs closer than `cutoff`. Each unordered pair appears once per
/// contributing image (`i < j`, or `i == j` for a positive self-image shift).
pub fn neighbor_pairs(
    cell: &Cell,
    positions: &[Vec3],
    cutoff: f64,
    mode: ImageMode,
) -> Result<Vec<NeighborPair>, GeometryError> {
    if !(cutoff > 0.0) || !cutoff.is_finite() {
        return Err(GeometryError::BadCutoff(cutoff));
    }
    if positions.iter().any(|p| p.iter().any(|x| !x.is_finite())) {
        return Err(GeometryError::NonFinite);
    }
    let n = positions.len();
    let mut pairs = Vec::new();
    if !cell.is_periodic() {
        for i in 0..n {
            for j in (i + 1)..n {
                let v = positions[j] - positions[i];
                let d = v.norm();
                if d < cutoff {
                    pairs.push(NeighborPair { i, j, shift: [0; 3], vector: v, distance: d });
                }
            }
        }
        return Ok(pairs);
    }
    match mode {
        ImageMode::MinimumImage => {
            let half = cell.half_min_width();
            if cutoff > half {
                return Err(GeometryError::CutoffTooLarge { cutoff, half_width: half });
            }
            for i in 0..n {
                for j in (i + 1)..n {
                    let d = positions[j] - positions[i];
                    let v = cell.min_image(&d);
                    let dist = v.norm();
                    if dist < cutoff {
                        let shift = integer_shift(cell, &(v - d));
                        pairs.push(NeighborPair { i, j, shift, vector: v, distance: dist });
                    }
                }
            }
        }
        ImageMode::Enumerate => {
            let frac: Vec<Vec3> = positions.iter().map(|p| cell.to_fractional(p)).collect();
            let periodic = cell.periodic();
            let c2 = cutoff * cutoff;
            for i in 0..n {
                for j in i..n {
                    let mut f = frac[j] - frac[i];
                    let mut base = [0i32; 3];
                    for k in 0..3 {
                        if periodic[k] {
                            let r = f[k].round();
                            base[k] = -(r as i32);
                            f[k] -= r;
                        }
                    }
                    let ranges = cell.shift_ranges(&f, cutoff);
                    for n0 in ranges[0].0..=ranges[0].1 {
                        for n1 in ranges[1].0..=ranges[1].1 {
                            for n2 in ranges[2].0..=ranges[2].1 {
                                let shift = [base[0] + n0, base[1] + n1, base[2] + n2];
                                if i == j && !lexicographically_positive(shift) {
                                    continue;
                                }
                                let g = f + Vec3::new(n0 as f64, n1 as f64, n2 as f64);
                                let v = cell.to_cartesian(&g);
                                let d2 = v.norm_squared();
                                if d2 < c2 {
                                    pairs.push(NeighborPair {
                                        i,
                                        j,
                                        shift,
                                        vector: v,
                                        distance: d2.sqrt(),
                                    });
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(pairs)
}

fn integer_shift(cell: &Cell, translation: &Vec3) -> [i32; 3] {
    let f = cell.to_fractional(translation);
    [f[0].round() as i32, f[1].round() as i32, f[2].round() as i32]
}

/// Picks the cheapest correct image mode for a cutoff.
pub fn image_mode_for(cell: &Cell, cutoff: f64) -> ImageMode {
    if cell.is_periodic() && cutoff > cell.half_min_width() {
        ImageMode::Enumerate
    } else {
        ImageMode::MinimumImage
    }
}

/// Smallest distance between distinct atoms over periodic images
/// (infinity for fewer than two atoms).
pub fn min_pair_distance(cell: &Cell, positions: &[Vec3]) -> f64 {
    let n = positions.len();
    let mut best = f64::INFINITY;
    for i in 0..n {
        for j in (i + 1)..n {
            best = best.min(cell.min_image(&(positions[j] - positions[i])).norm());
        }
    }
    best
}
