//! Pairwise calculators shared by the oracle, the surrogate and the MD engine.
//!
//! Both reference potentials and the trained surrogate reduce to a per-type
//! atomic constant plus a radial pair term, so a single kernel evaluates
//! energies, forces and the virial for either.

use thiserror::Error;

use crate::geometry::{image_mode_for, neighbor_pairs, GeometryError, NeighborPair, Vec3};
use crate::structure::AtomicConfiguration;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CalcError {
    #[error("species not covered: {0}")]
    UncoveredSpecies(String),
    #[error("species pair not covered: {0}")]
    UncoveredPair(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("invalid configuration: {0}")]
    Config(String),
}

/// A potential of the form `Σ_i u(t_i) + Σ_{i<j} φ(t_i, t_j, r_ij)`.
pub trait PairCalculator: Sync {
    /// Identifier recorded as a label source or trajectory calculator.
    fn id(&self) -> &str;

    fn cutoff(&self) -> f64;

    /// Maps species symbols to internal type indices.
    fn type_indices(&self, species: &[String]) -> Result<Vec<usize>, CalcError>;

    /// Constant per-atom energy for a type.
    fn atom_energy(&self, _t: usize) -> f64 {
        0.0
    }

    /// Pair energy and its radial derivative `dφ/dr`, for `r < cutoff`.
    fn pair(&self, ti: usize, tj: usize, r: f64) -> (f64, f64);
}

/// Energy (eV), forces (eV/Å), virial `Σ r_ij·f_ij` (eV) and the closest
/// interacting distance (Å).
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub energy: f64,
    pub forces: Vec<Vec3>,
    pub virial: f64,
    pub min_distance: f64,
}

/// Accumulates contributions from an explicit pair list.
pub fn evaluate_pairs<C: PairCalculator + ?Sized>(
    calc: &C,
    types: &[usize],
    pairs: &[NeighborPair],
) -> Evaluation {
    let n = types.len();
    let mut energy: f64 = types.iter().map(|&t| calc.atom_energy(t)).sum();
    let mut forces = vec![Vec3::zeros(); n];
    let mut virial = 0.0;
    let mut min_distance = f64::INFINITY;
    let rc = calc.cutoff();
    for p in pairs {
        if p.distance >= rc {
            continue;
        }
        min_distance = min_distance.min(p.distance);
        let (e, de) = calc.pair(types[p.i], types[p.j], p.distance);
        energy += e;
        // Force on j along the i→j vector is -dφ/dr · r̂.
        let f = p.vector * (-de / p.distance);
        forces[p.j] += f;
        forces[p.i] -= f;
        virial += -de * p.distance;
    }
    Evaluation { energy, forces, virial, min_distance }
}

/// Evaluates a configuration, enumerating images when the cutoff exceeds the
/// minimum-image limit.
pub fn evaluate<C: PairCalculator + ?Sized>(
    calc: &C,
    config: &AtomicConfiguration,
) -> Result<Evaluation, CalcError> {
    if config.is_empty() {
        return Err(CalcError::Config("configuration has no atoms".into()));
    }
    let types = calc.type_indices(&config.species)?;
    let mode = image_mode_for(&config.cell, calc.cutoff());
    let pairs = neighbor_pairs(&config.cell, &config.positions, calc.cutoff(), mode)?;
    Ok(evaluate_pairs(calc, &types, &pairs))
}
