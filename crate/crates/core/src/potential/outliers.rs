//! Per-frame residuals against reference labels and residual-based outliers.

use serde::{Deserialize, Serialize};

use super::model::SurrogateModel;
use crate::calc::{evaluate, CalcError};
use crate::frame::Dataset;
use crate::parallel;

#[derive(Debug, Clone, PartialEq)]
pub struct FrameResidual {
    pub dataset_id: String,
    pub index: usize,
    /// Predicted minus reference energy, per atom (eV/atom).
    pub energy_per_atom: f64,
    /// Largest per-atom force residual norm (eV/Å).
    pub max_force: f64,
    /// Sum of absolute force-component residuals and their count.
    pub force_abs_sum: f64,
    pub force_components: usize,
}

/// Residuals of every frame, in dataset then frame order.
pub fn frame_residuals(model: &SurrogateModel, datasets: &[&Dataset]) -> Result<Vec<FrameResidual>, CalcError> {
    let calc = model.calculator();
    let jobs: Vec<(&Dataset, usize)> =
        datasets.iter().flat_map(|d| (0..d.frames.len()).map(move |k| (*d, k))).collect();
    parallel::map(&jobs, |&(d, k)| {
        let frame = &d.frames[k];
        let ev = evaluate(&calc, &frame.config)?;
        let n = frame.config.len() as f64;
        let mut max_force: f64 = 0.0;
        let mut abs_sum = 0.0;
        for (p, r) in ev.forces.iter().zip(&frame.forces) {
            let diff = p - r;
            max_force = max_force.max(diff.norm());
            abs_sum += diff.abs().sum();
        }
        Ok(FrameResidual {
            dataset_id: d.dataset_id.clone(),
            index: k,
            energy_per_atom: (ev.energy - frame.energy) / n,
            max_force,
            force_abs_sum: abs_sum,
            force_components: 3 * frame.config.len(),
        })
    })
    .into_iter()
    .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutlierReason {
    Energy,
    Force,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Outlier {
    pub dataset_id: String,
    pub frame_index: usize,
    pub reason: OutlierReason,
}

/// Floor on residual spreads so identical frames never flag.
pub const SIGMA_FLOOR: f64 = 1e-12;

fn mean_std(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt().max(SIGMA_FLOOR))
}

/// Flags frames whose energy-per-atom residual, or whose largest force
/// residual, lies more than `z_max` standard deviations from the mean over
/// the input. An energy flag takes precedence over a force flag.
pub fn outliers_from_residuals(residuals: &[FrameResidual], z_max: f64) -> Result<Vec<Outlier>, String> {
    if residuals.len() < 3 {
        return Err(format!("outlier statistics need at least 3 frames, got {}", residuals.len()));
    }
    let e: Vec<f64> = residuals.iter().map(|r| r.energy_per_atom).collect();
    let f: Vec<f64> = residuals.iter().map(|r| r.max_force).collect();
    let (me, se) = mean_std(&e);
    let (mf, sf) = mean_std(&f);
    let mut out = Vec::new();
    for r in residuals {
        let reason = if (r.energy_per_atom - me).abs() > z_max * se {
            Some(OutlierReason::Energy)
        } else if (r.max_force - mf).abs() > z_max * sf {
            Some(OutlierReason::Force)
        } else {
            None
        };
        if let Some(reason) = reason {
            out.push(Outlier { dataset_id: r.dataset_id.clone(), frame_index: r.index, reason });
        }
    }
    Ok(out)
}

#[derive(Debug, thiserror::Error)]
pub enum OutlierError {
    #[error(transparent)]
    Calc(#[from] CalcError),
    #[error("{0}")]
    Statistics(String),
}

pub fn detect_outliers(model: &SurrogateModel, datasets: &[&Dataset], z_max: f64) -> Result<Vec<Outlier>, OutlierError> {
    let residuals = frame_residuals(model, datasets)?;
    outliers_from_residuals(&residuals, z_max).map_err(OutlierError::Statistics)
}
