//! Labeled frames and datasets.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Vec3;
use crate::structure::AtomicConfiguration;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FrameError {
    #[error("energy is not finite")]
    NonFiniteEnergy,
    #[error("force on atom {0} is not finite")]
    NonFiniteForce(usize),
    #[error("{forces} forces for {atoms} atoms")]
    ForceCount { forces: usize, atoms: usize },
}

/// A configuration with reference energy (eV) and forces (eV/Å).
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledFrame {
    pub config: AtomicConfiguration,
    pub energy: f64,
    pub forces: Vec<Vec3>,
    pub label_source: String,
    max_force: f64,
}

impl LabeledFrame {
    pub fn new(
        config: AtomicConfiguration,
        energy: f64,
        forces: Vec<Vec3>,
        label_source: impl Into<String>,
    ) -> Result<Self, FrameError> {
        if forces.len() != config.len() {
            return Err(FrameError::ForceCount { forces: forces.len(), atoms: config.len() });
        }
        if !energy.is_finite() {
            return Err(FrameError::NonFiniteEnergy);
        }
        if let Some(i) = forces.iter().position(|f| f.iter().any(|x| !x.is_finite())) {
            return Err(FrameError::NonFiniteForce(i));
        }
        let max_force = max_norm(&forces);
        Ok(Self { config, energy, forces, label_source: label_source.into(), max_force })
    }

    /// Largest per-atom force norm.
    pub fn max_force(&self) -> f64 {
        self.max_force
    }

    pub fn energy_per_atom(&self) -> f64 {
        if self.config.is_empty() {
            0.0
        } else {
            self.energy / self.config.len() as f64
        }
    }
}

pub fn max_norm(v: &[Vec3]) -> f64 {
    v.iter().map(|f| f.norm()).fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub frame_count: usize,
    pub total_atoms: usize,
    pub energy_per_atom_min: f64,
    pub energy_per_atom_max: f64,
    pub max_force_max: f64,
}

impl DatasetStats {
    pub fn of(frames: &[LabeledFrame]) -> Self {
        let mut stats = DatasetStats {
            frame_count: frames.len(),
            total_atoms: 0,
            energy_per_atom_min: f64::INFINITY,
            energy_per_atom_max: f64::NEG_INFINITY,
            max_force_max: 0.0,
        };
        for f in frames {
            stats.total_atoms += f.config.len();
            let e = f.energy_per_atom();
            stats.energy_per_atom_min = stats.energy_per_atom_min.min(e);
            stats.energy_per_atom_max = stats.energy_per_atom_max.max(e);
            stats.max_force_max = stats.max_force_max.max(f.max_force());
        }
        if frames.is_empty() {
            stats.energy_per_atom_min = 0.0;
            stats.energy_per_atom_max = 0.0;
        }
        stats
    }
}

/// An ordered collection of labeled frames.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub dataset_id: String,
    pub frames: Vec<LabeledFrame>,
    /// Ids of the trajectories (or other sources) the frames came from.
    pub origin: Vec<String>,
    stats: DatasetStats,
}

impl Dataset {
    pub fn new(dataset_id: impl Into<String>, frames: Vec<LabeledFrame>, origin: Vec<String>) -> Self {
        let stats = DatasetStats::of(&frames);
        Self { dataset_id: dataset_id.into(), frames, origin, stats }
    }

    pub fn stats(&self) -> &DatasetStats {
        &self.stats
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Drops the frames at `indices` (positions in the current order) and
    /// returns them.
    pub fn remove_frames(&mut self, indices: &[usize]) -> Vec<LabeledFrame> {
        let mut keep = Vec::with_capacity(self.frames.len());
        let mut removed = Vec::new();
        for (k, f) in std::mem::take(&mut self.frames).into_iter().enumerate() {
            if indices.contains(&k) {
                removed.push(f);
            } else {
                keep.push(f);
            }
        }
        self.frames = keep;
        self.stats = DatasetStats::of(&self.frames);
        removed
    }
}
