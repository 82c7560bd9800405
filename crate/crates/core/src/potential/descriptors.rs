//! Gaussian radial descriptors with a cosine cutoff.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::calc::CalcError;
use crate::geometry::{image_mode_for, neighbor_pairs, NeighborPair, Vec3};
use crate::oracle::pair_key;
use crate::structure::AtomicConfiguration;

/// Radial basis shared by every atom of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DescriptorBasis {
    pub cutoff: f64,
    pub n_radial: usize,
    pub r_min: f64,
    pub width: f64,
    /// Sorted species symbols.
    pub species: Vec<String>,
    /// Unordered pairs `"A-B"` in block order.
    pub species_pairs: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BasisSettings {
    pub cutoff: f64,
    pub n_radial: usize,
    pub r_min: f64,
    /// Gaussian width; the center spacing when absent.
    pub width: Option<f64>,
}

impl Default for BasisSettings {
    fn default() -> Self {
        Self { cutoff: 5.0, n_radial: 12, r_min: 1.0, width: None }
    }
}

impl DescriptorBasis {
    pub fn new(species: &[String], settings: &BasisSettings) -> Result<Self, CalcError> {
        let BasisSettings { cutoff, n_radial, r_min, width } = *settings;
        if !(cutoff > 0.0) || n_radial < 2 || !(r_min >= 0.0) || r_min >= cutoff {
            return Err(CalcError::Config(format!(
                "invalid basis: cutoff {cutoff}, n_radial {n_radial}, r_min {r_min}"
            )));
        }
        let mut species = species.to_vec();
        species.sort();
        species.dedup();
        if species.is_empty() {
            return Err(CalcError::Config("basis needs at least one species".into()));
        }
        let spacing = (cutoff - r_min) / (n_radial - 1) as f64;
        let width = width.unwrap_or(spacing);
        if !(width > 0.0) {
            return Err(CalcError::Config(format!("invalid Gaussian width {width}")));
        }
        let mut species_pairs = Vec::new();
        for i in 0..species.len() {
            for j in i..species.len() {
                species_pairs.push(pair_key(&species[i], &species[j]));
            }
        }
        Ok(Self { cutoff, n_radial, r_min, width, species, species_pairs })
    }

    pub fn settings(&self) -> BasisSettings {
        BasisSettings { cutoff: self.cutoff, n_radial: self.n_radial, r_min: self.r_min, width: Some(self.width) }
    }

    pub fn center(&self, k: usize) -> f64 {
        self.r_min + k as f64 * (self.cutoff - self.r_min) / (self.n_radial - 1) as f64
    }

    /// Feature count per atom.
    pub fn dim(&self) -> usize {
        self.n_radial * self.species_pairs.len()
    }

    pub fn n_species(&self) -> usize {
        self.species.len()
    }

    pub fn type_indices(&self, species: &[String]) -> Result<Vec<usize>, CalcError> {
        species
            .iter()
            .map(|s| {
                self.species.binary_search(s).map_err(|_| CalcError::UncoveredSpecies(s.clone()))
            })
            .collect()
    }

    /// Block index of the unordered pair of types `a`, `b`.
    pub fn pair_block(&self, a: usize, b: usize) -> usize {
        let (a, b) = if a <= b { (a, b) } else { (b, a) };
        let n = self.species.len();
        // Row-major upper triangle.
        a * n - a * a.saturating_sub(1) / 2 + (b - a)
    }

    /// Calls `f(k, g_k, r - c_k)` for every Gaussian `g_k(r)`, without the
    /// cutoff factor. Uses the ratio recurrence between equally spaced
    /// centers, starting from the center nearest `r`.
    #[inline]
    pub fn for_each_gaussian(&self, r: f64, mut f: impl FnMut(usize, f64, f64)) {
        let n = self.n_radial;
        let spacing = (self.cutoff - self.r_min) / (n - 1) as f64;
        let inv_w2 = 1.0 / (self.width * self.width);
        let q2 = (-spacing * spacing * inv_w2).exp();
        let q = q2.sqrt();
        let start = (((r - self.r_min) / spacing).round().max(0.0) as usize).min(n - 1);
        let d0 = r - self.center(start);
        let g0 = (-0.5 * d0 * d0 * inv_w2).exp();
        f(start, g0, d0);
        let t0 = (spacing * d0 * inv_w2).exp();
        let (mut g, mut t) = (g0, t0 * q);
        for k in start + 1..n {
            g *= t;
            t *= q2;
            f(k, g, r - self.center(k));
        }
        let (mut g, mut t) = (g0, q / t0);
        for k in (0..start).rev() {
            g *= t;
            t *= q2;
            f(k, g, r - self.center(k));
        }
    }

    /// Radial functions `h_k(r)` and derivatives, written into `h` and `dh`.
    pub fn radial(&self, r: f64, h: &mut [f64], dh: &mut [f64]) {
        if r >= self.cutoff {
            h.iter_mut().for_each(|x| *x = 0.0);
            dh.iter_mut().for_each(|x| *x = 0.0);
            return;
        }
        let x = PI * r / self.cutoff;
        let fc = 0.5 * (x.cos() + 1.0);
        let dfc = -0.5 * PI / self.cutoff * x.sin();
        let inv_w2 = 1.0 / (self.width * self.width);
        self.for_each_gaussian(r, |k, g, d| {
            h[k] = g * fc;
            dh[k] = g * (dfc - d * inv_w2 * fc);
        });
    }

    /// Pairs within the cutoff, enumerating images where needed.
    pub fn pairs(&self, config: &AtomicConfiguration) -> Result<Vec<NeighborPair>, CalcError> {
        let mode = image_mode_for(&config.cell, self.cutoff);
        Ok(neighbor_pairs(&config.cell, &config.positions, self.cutoff, mode)?)
    }
}

/// Per-atom features and their position gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct Descriptors {
    /// `features[i][block * n_radial + k]`.
    pub features: Vec<Vec<f64>>,
    /// `gradients[i]` lists `(atom a, feature index, ∂φ_i/∂r_a)`.
    pub gradients: Vec<Vec<(usize, usize, Vec3)>>,
}

pub fn compute_descriptors(config: &AtomicConfiguration, basis: &DescriptorBasis) -> Result<Descriptors, CalcError> {
    let types = basis.type_indices(&config.species)?;
    let pairs = basis.pairs(config)?;
    let n = config.len();
    let k_n = basis.n_radial;
    let mut features = vec![vec![0.0; basis.dim()]; n];
    let mut gradients: Vec<Vec<(usize, usize, Vec3)>> = vec![Vec::new(); n];
    let mut h = vec![0.0; k_n];
    let mut dh = vec![0.0; k_n];
    for p in &pairs {
        basis.radial(p.distance, &mut h, &mut dh);
        let block = basis.pair_block(types[p.i], types[p.j]);
        let u = p.vector / p.distance;
        for k in 0..k_n {
            let col = block * k_n + k;
            let g = u * dh[k];
            // The pair term enters both atoms' environments.
            features[p.i][col] += h[k];
            features[p.j][col] += h[k];
            if p.i != p.j {
                gradients[p.i].push((p.j, col, g));
                gradients[p.i].push((p.i, col, -g));
                gradients[p.j].push((p.j, col, g));
                gradients[p.j].push((p.i, col, -g));
            }
        }
    }
    Ok(Descriptors { features, gradients })
}
