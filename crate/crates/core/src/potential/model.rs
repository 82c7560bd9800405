//! The linear surrogate and its evaluation.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::descriptors::{compute_descriptors, DescriptorBasis};
use crate::calc::{CalcError, PairCalculator};
use crate::geometry::Vec3;
use crate::structure::AtomicConfiguration;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainMode {
    /// Energy-only fit on half the radial functions.
    Quick,
    Accurate,
}

impl TrainMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            TrainMode::Quick => "quick",
            TrainMode::Accurate => "accurate",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// eV/atom.
    pub energy_mae: f64,
    /// eV/Å, over force components.
    pub force_mae: f64,
}

/// Per-species intercept plus linear weights on the atom's descriptor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogateModel {
    pub model_id: String,
    pub parent_id: Option<String>,
    pub basis: DescriptorBasis,
    pub weights: BTreeMap<String, Vec<f64>>,
    pub intercepts: BTreeMap<String, f64>,
    pub lambda: f64,
    pub beta: f64,
    pub metrics: Metrics,
    pub trained_on: Vec<String>,
    pub mode: TrainMode,
}

impl SurrogateModel {
    /// A model with all weights and intercepts zero.
    pub fn zeros(model_id: impl Into<String>, basis: DescriptorBasis) -> Self {
        let weights = basis.species.iter().map(|s| (s.clone(), vec![0.0; basis.dim()])).collect();
        let intercepts = basis.species.iter().map(|s| (s.clone(), 0.0)).collect();
        Self {
            model_id: model_id.into(),
            parent_id: None,
            basis,
            weights,
            intercepts,
            lambda: 0.0,
            beta: 0.0,
            metrics: Metrics { energy_mae: 0.0, force_mae: 0.0 },
            trained_on: Vec::new(),
            mode: TrainMode::Accurate,
        }
    }

    /// Pair-form evaluator equivalent to [`predict`].
    pub fn calculator(&self) -> SurrogateCalculator {
        let b = &self.basis;
        let n = b.n_species();
        let kn = b.n_radial;
        let mut coeffs = vec![vec![vec![0.0; kn]; n]; n];
        for ti in 0..n {
            for tj in 0..n {
                let block = b.pair_block(ti, tj);
                let wi = &self.weights[&b.species[ti]];
                let wj = &self.weights[&b.species[tj]];
                for k in 0..kn {
                    coeffs[ti][tj][k] = wi[block * kn + k] + wj[block * kn + k];
                }
            }
        }
        let intercepts = b.species.iter().map(|s| self.intercepts[s]).collect();
        SurrogateCalculator { id: self.model_id.clone(), basis: b.clone(), coeffs, intercepts }
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(std::io::Error::other)?;
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        std::fs::write(path, text + "\n")
    }

    pub fn load(path: &Path) -> std::io::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let model: Self = serde_json::from_str(&text).map_err(std::io::Error::other)?;
        let dim = model.basis.dim();
        let consistent = model.basis.species.iter().all(|s| {
            model.weights.get(s).is_some_and(|w| w.len() == dim) && model.intercepts.contains_key(s)
        });
        if !consistent {
            return Err(std::io::Error::other(format!("{}: weights do not match basis", path.display())));
        }
        Ok(model)
    }
}

/// Energy and forces through the descriptor chain rule.
pub fn predict(model: &SurrogateModel, config: &AtomicConfiguration) -> Result<(f64, Vec<Vec3>), CalcError> {
    let d = compute_descriptors(config, &model.basis)?;
    let mut energy = 0.0;
    let mut forces = vec![Vec3::zeros(); config.len()];
    for (i, s) in config.species.iter().enumerate() {
        let w = &model.weights[s];
        energy += model.intercepts[s];
        energy += w.iter().zip(&d.features[i]).map(|(a, b)| a * b).sum::<f64>();
        for &(a, col, g) in &d.gradients[i] {
            forces[a] -= g * w[col];
        }
    }
    Ok((energy, forces))
}

#[derive(Debug, Clone)]
pub struct SurrogateCalculator {
    id: String,
    basis: DescriptorBasis,
    /// Combined pair coefficients `w[t_i][block,k] + w[t_j][block,k]`.
    coeffs: Vec<Vec<Vec<f64>>>,
    intercepts: Vec<f64>,
}

impl PairCalculator for SurrogateCalculator {
    fn id(&self) -> &str {
        &self.id
    }

    fn cutoff(&self) -> f64 {
        self.basis.cutoff
    }

    fn type_indices(&self, species: &[String]) -> Result<Vec<usize>, CalcError> {
        self.basis.type_indices(species)
    }

    fn atom_energy(&self, t: usize) -> f64 {
        self.intercepts[t]
    }

    fn pair(&self, ti: usize, tj: usize, r: f64) -> (f64, f64) {
        let b = &self.basis;
        if r >= b.cutoff {
            return (0.0, 0.0);
        }
        let c = &self.coeffs[ti][tj];
        let x = std::f64::consts::PI * r / b.cutoff;
        let fc = 0.5 * (x.cos() + 1.0);
        let dfc = -0.5 * std::f64::consts::PI / b.cutoff * x.sin();
        let inv_w2 = 1.0 / (b.width * b.width);
        let (mut sg, mut sdg) = (0.0, 0.0);
        b.for_each_gaussian(r, |k, g, d| {
            let g = c[k] * g;
            sg += g;
            sdg -= g * d * inv_w2;
        });
        (sg * fc, sg * dfc + sdg * fc)
    }
}
