//! Atomic configurations: a cell, species and (unwrapped) positions.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::elements::MassTable;
use crate::geometry::{Cell, Vec3};
use crate::units::AMU_PER_A3_TO_G_PER_CM3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StructureError {
    #[error("per-atom array `{field}` has {got} entries, expected {expected}")]
    LengthMismatch { field: &'static str, got: usize, expected: usize },
    #[error("non-finite position for atom {0}")]
    NonFinitePosition(usize),
    #[error("no mass known for species `{0}`")]
    MissingMass(String),
    #[error("density is undefined for a non-periodic configuration")]
    NotPeriodic,
}

/// One atomic structure. Positions are kept unwrapped; use
/// [`AtomicConfiguration::wrapped_positions`] for the in-cell view.
#[derive(Debug, Clone, PartialEq)]
pub struct AtomicConfiguration {
    pub cell: Cell,
    pub species: Vec<String>,
    pub positions: Vec<Vec3>,
    pub velocities: Option<Vec<Vec3>>,
    pub region_tags: Option<Vec<String>>,
    pub structure_id: String,
    pub is_validation: bool,
    /// Header keys that carry no meaning here but must survive a round trip.
    pub info: BTreeMap<String, String>,
}

impl AtomicConfiguration {
    pub fn new(cell: Cell, species: Vec<String>, positions: Vec<Vec3>) -> Self {
        Self {
            cell,
            species,
            positions,
            velocities: None,
            region_tags: None,
            structure_id: String::new(),
            is_validation: false,
            info: BTreeMap::new(),
        }
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.structure_id = id.into();
        self
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Checks the per-atom array lengths and coordinate finiteness.
    pub fn validate(&self) -> Result<(), StructureError> {
        let n = self.positions.len();
        if self.species.len() != n {
            return Err(StructureError::LengthMismatch { field: "species", got: self.species.len(), expected: n });
        }
        if let Some(v) = &self.velocities {
            if v.len() != n {
                return Err(StructureError::LengthMismatch { field: "velocities", got: v.len(), expected: n });
            }
        }
        if let Some(t) = &self.region_tags {
            if t.len() != n {
                return Err(StructureError::LengthMismatch { field: "region_tags", got: t.len(), expected: n });
            }
        }
        if let Some(i) = self.positions.iter().position(|p| p.iter().any(|x| !x.is_finite())) {
            return Err(StructureError::NonFinitePosition(i));
        }
        Ok(())
    }

    pub fn wrapped_positions(&self) -> Vec<Vec3> {
        self.positions.iter().map(|p| self.cell.wrap(p)).collect()
    }

    /// Sorted set of distinct species symbols.
    pub fn species_set(&self) -> BTreeSet<String> {
        self.species.iter().cloned().collect()
    }

    pub fn count_of(&self, symbol: &str) -> usize {
        self.species.iter().filter(|s| *s == symbol).count()
    }

    pub fn total_mass(&self, masses: &MassTable) -> Result<f64, StructureError> {
        self.species
            .iter()
            .map(|s| masses.get(s).copied().ok_or_else(|| StructureError::MissingMass(s.clone())))
            .sum()
    }

    /// Mass density in g/cm³.
    pub fn density(&self, masses: &MassTable) -> Result<f64, StructureError> {
        if !self.cell.fully_periodic() {
            return Err(StructureError::NotPeriodic);
        }
        Ok(self.total_mass(masses)? / self.cell.volume() * AMU_PER_A3_TO_G_PER_CM3)
    }

    /// Rigidly translates all atoms.
    pub fn translate(&mut self, shift: &Vec3) {
        for p in &mut self.positions {
            *p += shift;
        }
    }

    /// Scales cell and positions isotropically about the origin.
    pub fn scale(&mut self, factor: f64) {
        self.cell = self.cell.scaled(factor);
        for p in &mut self.positions {
            *p *= factor;
        }
    }
}
