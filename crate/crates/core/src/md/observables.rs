//! Trajectory observables: density, RDF, MSD, diffusion and convergence.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::engine::Trajectory;
use crate::elements::MassTable;
use crate::geometry::{image_mode_for, neighbor_pairs};
use crate::units::{A2_PER_FS_TO_CM2_PER_S, AMU_PER_A3_TO_G_PER_CM3};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ObservableError {
    #[error("density is undefined for a non-periodic system")]
    NotPeriodic,
    #[error("no atoms of the selected species")]
    EmptySelection,
    #[error("trajectory has no snapshots")]
    NoFrames,
    #[error("fit window has {0} points; need at least 3")]
    ShortWindow(usize),
    #[error("empty series")]
    EmptySeries,
    #[error("window {window} exceeds series length {len}")]
    BadWindow { window: usize, len: usize },
    #[error("no mass for species `{0}`")]
    MissingMass(String),
    #[error("{0}")]
    Geometry(String),
}

/// Per-snapshot mass density in g/cm³.
pub fn density_series(traj: &Trajectory, masses: &MassTable) -> Result<Vec<f64>, ObservableError> {
    traj.frames
        .iter()
        .map(|s| {
            if !s.config.cell.fully_periodic() {
                return Err(ObservableError::NotPeriodic);
            }
            let mass: f64 = s
                .config
                .species
                .iter()
                .map(|sp| masses.get(sp).copied().ok_or_else(|| ObservableError::MissingMass(sp.clone())))
                .sum::<Result<f64, _>>()?;
            Ok(mass / s.config.cell.volume() * AMU_PER_A3_TO_G_PER_CM3)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rdf {
    /// Bin centers (Å).
    pub r: Vec<f64>,
    pub g: Vec<f64>,
    pub bin_width: f64,
}

impl Rdf {
    /// Center of the highest bin.
    pub fn first_peak(&self) -> Option<f64> {
        let (k, _) = self
            .g
            .iter()
            .enumerate()
            .fold((None, f64::NEG_INFINITY), |(bk, bv), (k, &v)| if v > bv { (Some(k), v) } else { (bk, bv) });
        k.map(|k| self.r[k])
    }
}

/// Radial distribution function of species pair `(a, b)` averaged over all
/// snapshots, normalized by ideal-gas shell counts.
pub fn rdf(traj: &Trajectory, pair: (&str, &str), r_max: f64, n_bins: usize) -> Result<Rdf, ObservableError> {
    if traj.frames.is_empty() {
        return Err(ObservableError::NoFrames);
    }
    let dr = r_max / n_bins as f64;
    let mut hist = vec![0.0; n_bins];
    let mut norm = 0.0;
    let same = pair.0 == pair.1;
    for s in &traj.frames {
        let c = &s.config;
        let na = c.count_of(pair.0) as f64;
        let nb = c.count_of(pair.1) as f64;
        if na == 0.0 || nb == 0.0 || (same && na < 2.0) {
            return Err(ObservableError::EmptySelection);
        }
        let ps = neighbor_pairs(&c.cell, &c.positions, r_max, image_mode_for(&c.cell, r_max))
            .map_err(|e| ObservableError::Geometry(e.to_string()))?;
        for p in ps {
            let (si, sj) = (c.species[p.i].as_str(), c.species[p.j].as_str());
            // Count ordered (A, B) pairs.
            let mut w = 0.0;
            if si == pair.0 && sj == pair.1 {
                w += 1.0;
            }
            if si == pair.1 && sj == pair.0 {
                w += 1.0;
            }
            if w > 0.0 {
                let k = (p.distance / dr) as usize;
                if k < n_bins {
                    hist[k] += w;
                }
            }
        }
        let partners = if same { nb - 1.0 } else { nb };
        norm += na * partners / c.cell.volume();
    }
    let mut r = Vec::with_capacity(n_bins);
    let mut g = Vec::with_capacity(n_bins);
    for (k, h) in hist.iter().enumerate() {
        let lo = k as f64 * dr;
        let hi = lo + dr;
        let shell = 4.0 / 3.0 * std::f64::consts::PI * (hi.powi(3) - lo.powi(3));
        r.push(lo + 0.5 * dr);
        g.push(h / (norm * shell));
    }
    Ok(Rdf { r, g, bin_width: dr })
}

/// Mean squared displacement (Å²) of `species` against time (fs) relative to
/// the first snapshot, from unwrapped positions.
pub fn msd(traj: &Trajectory, species: &str) -> Result<Vec<(f64, f64)>, ObservableError> {
    let first = traj.frames.first().ok_or(ObservableError::NoFrames)?;
    let idx: Vec<usize> = first.config.species.iter().enumerate().filter(|(_, s)| *s == species).map(|(i, _)| i).collect();
    if idx.is_empty() {
        return Err(ObservableError::EmptySelection);
    }
    Ok(traj
        .frames
        .iter()
        .map(|s| {
            let sum: f64 = idx.iter().map(|&i| (s.config.positions[i] - first.config.positions[i]).norm_squared()).sum();
            (s.time - first.time, sum / idx.len() as f64)
        })
        .collect())
}

/// Ordinary least-squares slope and intercept.
pub fn linear_fit(points: &[(f64, f64)]) -> (f64, f64) {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = if sxx == 0.0 { 0.0 } else { sxy / sxx };
    (slope, my - slope * mx)
}

/// Diffusion coefficient (cm²/s) from the last `window_fraction` of an MSD
/// curve: slope / (2·dim). Negative values are returned as computed.
pub fn diffusion_coefficient(curve: &[(f64, f64)], window_fraction: f64, dim: usize) -> Result<f64, ObservableError> {
    let take = ((curve.len() as f64) * window_fraction.clamp(0.0, 1.0)).round() as usize;
    if take < 3 {
        return Err(ObservableError::ShortWindow(take));
    }
    let (slope, _) = linear_fit(&curve[curve.len() - take..]);
    Ok(slope / (2.0 * dim as f64) * A2_PER_FS_TO_CM2_PER_S)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConvergenceMethod {
    Std,
    Slope,
    Range,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Convergence {
    pub converged: bool,
    /// The statistic compared against the tolerance.
    pub value: f64,
    pub mean: f64,
}

/// Tests the last `window` samples. Statistics are relative to `|mean|`
/// unless the mean is below 1e-12 in magnitude, in which case they are
/// taken as absolute.
pub fn check_convergence(
    series: &[f64],
    method: ConvergenceMethod,
    window: usize,
    tolerance: f64,
) -> Result<Convergence, ObservableError> {
    if series.is_empty() {
        return Err(ObservableError::EmptySeries);
    }
    if window == 0 || window > series.len() {
        return Err(ObservableError::BadWindow { window, len: series.len() });
    }
    let w = &series[series.len() - window..];
    let n = w.len() as f64;
    let mean = w.iter().sum::<f64>() / n;
    let scale = if mean.abs() < 1e-12 { 1.0 } else { mean.abs() };
    let raw = match method {
        ConvergenceMethod::Std => (w.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt(),
        ConvergenceMethod::Slope => {
            let pts: Vec<(f64, f64)> = w.iter().enumerate().map(|(k, &y)| (k as f64, y)).collect();
            linear_fit(&pts).0.abs() * window as f64
        }
        ConvergenceMethod::Range => {
            w.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - w.iter().cloned().fold(f64::INFINITY, f64::min)
        }
    };
    let value = raw / scale;
    Ok(Convergence { converged: value < tolerance, value, mean })
}

pub fn mean(x: &[f64]) -> f64 {
    if x.is_empty() {
        f64::NAN
    } else {
        x.iter().sum::<f64>() / x.len() as f64
    }
}
