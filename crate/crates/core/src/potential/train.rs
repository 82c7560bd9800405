//! Closed-form ridge training on energies and forces.
//!
//! Each frame contributes one energy row scaled by `1/N` and, unless the
//! force weight is zero, `3N` force rows scaled by `√β`. The normal matrix is
//! accumulated per frame over fixed-size chunks and folded in chunk order,
//! so the result does not depend on the number of worker threads.
//!
//! Fine-tuning re-solves on the parent's datasets followed by the new ones.
//! For a linear model with a closed-form solution this is the same problem as
//! a cold solve on that union, so the two give identical weights.

use std::collections::BTreeMap;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use super::descriptors::{BasisSettings, DescriptorBasis};
use super::model::{Metrics, SurrogateModel, TrainMode};
use super::outliers::{frame_residuals, outliers_from_residuals, Outlier};
use crate::calc::CalcError;
use crate::frame::{Dataset, LabeledFrame};
use crate::parallel;
use crate::report::TrainRecord;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("no training frames")]
    Empty,
    #[error("normal matrix is singular; use a positive ridge strength (lambda > 0)")]
    Singular,
    #[error("parent model `{parent}` was trained on `{dataset}`, which was not supplied")]
    MissingParentData { parent: String, dataset: String },
    #[error(transparent)]
    Calc(#[from] CalcError),
}

/// Defaults for the ridge strength and force weight.
pub const DEFAULT_LAMBDA: f64 = 1e-6;
pub const DEFAULT_BETA: f64 = 10.0;

const FRAMES_PER_CHUNK: usize = 4;

pub struct TrainRequest<'a> {
    pub model_id: String,
    pub datasets: Vec<&'a Dataset>,
    /// Species the model must cover in addition to those in the data.
    pub species: Vec<String>,
    pub basis: BasisSettings,
    pub mode: TrainMode,
    pub parent: Option<&'a SurrogateModel>,
    pub lambda: f64,
    pub beta: f64,
    pub z_max: f64,
}

pub struct TrainOutput {
    pub model: SurrogateModel,
    pub record: TrainRecord,
    pub outliers: Vec<Outlier>,
    /// Rows of the least-squares system.
    pub equations: usize,
    pub solve_seconds: f64,
}

/// Parameter layout: per species, an intercept followed by the weights.
struct Layout {
    dim: usize,
}

impl Layout {
    fn block(&self) -> usize {
        1 + self.dim
    }
    fn intercept(&self, t: usize) -> usize {
        t * self.block()
    }
    fn weight(&self, t: usize, col: usize) -> usize {
        t * self.block() + 1 + col
    }
}

/// Least-squares rows of one frame.
pub fn design_rows(
    frame: &LabeledFrame,
    basis: &DescriptorBasis,
    beta: f64,
) -> Result<(DMatrix<f64>, DVector<f64>), CalcError> {
    let layout = Layout { dim: basis.dim() };
    let n_params = basis.n_species() * layout.block();
    let types = basis.type_indices(&frame.config.species)?;
    let n = types.len();
    let rows = if beta > 0.0 { 1 + 3 * n } else { 1 };
    let mut a = DMatrix::zeros(rows, n_params);
    let mut b = DVector::zeros(rows);
    let inv_n = 1.0 / n as f64;
    let sb = beta.sqrt();
    for &t in &types {
        a[(0, layout.intercept(t))] += inv_n;
    }
    b[0] = frame.energy * inv_n;
    let kn = basis.n_radial;
    let mut h = vec![0.0; kn];
    let mut dh = vec![0.0; kn];
    for p in basis.pairs(&frame.config)? {
        basis.radial(p.distance, &mut h, &mut dh);
        let block = basis.pair_block(types[p.i], types[p.j]);
        let u = p.vector / p.distance;
        for k in 0..kn {
            let ci = layout.weight(types[p.i], block * kn + k);
            let cj = layout.weight(types[p.j], block * kn + k);
            a[(0, ci)] += h[k] * inv_n;
            a[(0, cj)] += h[k] * inv_n;
            if rows > 1 && p.i != p.j {
                for c in 0..3 {
                    let g = sb * dh[k] * u[c];
                    for col in [ci, cj] {
                        a[(1 + 3 * p.j + c, col)] -= g;
                        a[(1 + 3 * p.i + c, col)] += g;
                    }
                }
            }
        }
    }
    if rows > 1 {
        for (i, f) in frame.forces.iter().enumerate() {
            for c in 0..3 {
                b[1 + 3 * i + c] = sb * f[c];
            }
        }
    }
    Ok((a, b))
}

/// Normal-equation sums `AᵀA`, `Aᵀb` and the row count.
pub fn accumulate(
    frames: &[&LabeledFrame],
    basis: &DescriptorBasis,
    beta: f64,
) -> Result<(DMatrix<f64>, DVector<f64>, usize), CalcError> {
    let n_params = basis.n_species() * (1 + basis.dim());
    let partials = parallel::map_chunks(frames, FRAMES_PER_CHUNK, |chunk| {
        let mut ata = DMatrix::zeros(n_params, n_params);
        let mut atb = DVector::zeros(n_params);
        let mut rows = 0;
        for f in chunk {
            let (a, b) = design_rows(f, basis, beta)?;
            ata += a.tr_mul(&a);
            atb += a.tr_mul(&b);
            rows += a.nrows();
        }
        Ok::<_, CalcError>((ata, atb, rows))
    });
    let mut ata = DMatrix::zeros(n_params, n_params);
    let mut atb = DVector::zeros(n_params);
    let mut rows = 0;
    for p in partials {
        let (m, v, r) = p?;
        ata += m;
        atb += v;
        rows += r;
    }
    Ok((ata, atb, rows))
}

/// Solves `(AᵀA + λI) x = Aᵀb` by Cholesky. Parameters whose column never
/// appears (zero diagonal) are pinned to zero.
pub fn solve_ridge(ata: &DMatrix<f64>, atb: &DVector<f64>, lambda: f64) -> Result<DVector<f64>, TrainError> {
    let n = ata.nrows();
    let active: Vec<usize> = (0..n).filter(|&i| ata[(i, i)] != 0.0).collect();
    let m = active.len();
    let mut x = DVector::zeros(n);
    if m == 0 {
        return Ok(x);
    }
    let mut sys = DMatrix::from_fn(m, m, |r, c| ata[(active[r], active[c])]);
    for d in 0..m {
        sys[(d, d)] += lambda;
    }
    let rhs = DVector::from_fn(m, |r, _| atb[active[r]]);
    let max_diag = (0..m).map(|d| sys[(d, d)]).fold(0.0, f64::max);
    let chol = sys.cholesky().ok_or(TrainError::Singular)?;
    let min_pivot = (0..m).map(|d| chol.l_dirty()[(d, d)].powi(2)).fold(f64::INFINITY, f64::min);
    if lambda == 0.0 && min_pivot < 1e-12 * max_diag {
        return Err(TrainError::Singular);
    }
    let sol = chol.solve(&rhs);
    for (r, &i) in active.iter().enumerate() {
        x[i] = sol[r];
    }
    Ok(x)
}

/// Orders datasets as the parent's lineage followed by any new ids.
fn training_union<'a>(req: &TrainRequest<'a>) -> Result<Vec<&'a Dataset>, TrainError> {
    let mut out: Vec<&Dataset> = Vec::new();
    if let Some(parent) = req.parent {
        for id in &parent.trained_on {
            let d = req.datasets.iter().find(|d| &d.dataset_id == id).ok_or_else(|| {
                TrainError::MissingParentData { parent: parent.model_id.clone(), dataset: id.clone() }
            })?;
            out.push(d);
        }
    }
    for d in &req.datasets {
        if !out.iter().any(|o| o.dataset_id == d.dataset_id) {
            out.push(d);
        }
    }
    Ok(out)
}

pub fn train(req: &TrainRequest<'_>) -> Result<TrainOutput, TrainError> {
    let datasets = training_union(req)?;
    let frames: Vec<&LabeledFrame> = datasets.iter().flat_map(|d| d.frames.iter()).collect();
    if frames.is_empty() {
        return Err(TrainError::Empty);
    }
    let mut species: Vec<String> = req.species.clone();
    species.extend(frames.iter().flat_map(|f| f.config.species.iter().cloned()));
    let mut settings = req.basis;
    let beta = match req.mode {
        TrainMode::Accurate => req.beta,
        TrainMode::Quick => {
            settings.n_radial = (settings.n_radial / 2).max(2);
            settings.width = None;
            0.0
        }
    };
    let basis = DescriptorBasis::new(&species, &settings)?;

    let started = Instant::now();
    let (ata, atb, equations) = accumulate(&frames, &basis, beta)?;
    let x = solve_ridge(&ata, &atb, req.lambda)?;
    let solve_seconds = started.elapsed().as_secs_f64();

    let layout = Layout { dim: basis.dim() };
    let mut weights = BTreeMap::new();
    let mut intercepts = BTreeMap::new();
    for (t, s) in basis.species.iter().enumerate() {
        intercepts.insert(s.clone(), x[layout.intercept(t)]);
        weights.insert(s.clone(), (0..basis.dim()).map(|c| x[layout.weight(t, c)]).collect());
    }
    let mut model = SurrogateModel {
        model_id: req.model_id.clone(),
        parent_id: req.parent.map(|p| p.model_id.clone()),
        basis,
        weights,
        intercepts,
        lambda: req.lambda,
        beta,
        metrics: Metrics { energy_mae: 0.0, force_mae: 0.0 },
        trained_on: datasets.iter().map(|d| d.dataset_id.clone()).collect(),
        mode: req.mode,
    };
    let residuals = frame_residuals(&model, &datasets)?;
    model.metrics = metrics_from(&residuals);
    let outliers = if residuals.len() >= 3 {
        outliers_from_residuals(&residuals, req.z_max).unwrap_or_default()
    } else {
        Vec::new()
    };
    let record = TrainRecord {
        model_id: model.model_id.clone(),
        parent_id: model.parent_id.clone(),
        energy_mae: model.metrics.energy_mae,
        force_mae: model.metrics.force_mae,
        outlier_count: outliers.len(),
        frame_count: frames.len(),
        trained_on: model.trained_on.clone(),
        mode: req.mode.as_str().to_string(),
        epochs: 1,
        path: format!("models/{}.json", model.model_id),
        status: "registered".into(),
    };
    Ok(TrainOutput { model, record, outliers, equations, solve_seconds })
}

pub fn metrics_from(residuals: &[super::outliers::FrameResidual]) -> Metrics {
    if residuals.is_empty() {
        return Metrics { energy_mae: 0.0, force_mae: 0.0 };
    }
    let energy_mae = residuals.iter().map(|r| r.energy_per_atom.abs()).sum::<f64>() / residuals.len() as f64;
    let comps: usize = residuals.iter().map(|r| r.force_components).sum();
    let force_mae = if comps == 0 { 0.0 } else { residuals.iter().map(|r| r.force_abs_sum).sum::<f64>() / comps as f64 };
    Metrics { energy_mae, force_mae }
}

/// Metrics of `model` on arbitrary labeled data.
pub fn evaluate_metrics(model: &SurrogateModel, datasets: &[&Dataset]) -> Result<Metrics, CalcError> {
    Ok(metrics_from(&frame_residuals(model, datasets)?))
}

/// Linear model of solve time against equation count, fitted from past
/// training runs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainTimeModel {
    pub intercept: f64,
    pub seconds_per_equation: f64,
}

impl TrainTimeModel {
    /// Least-squares fit over `(equations, seconds)` samples; `None` with
    /// fewer than two distinct equation counts.
    pub fn fit(samples: &[(usize, f64)]) -> Option<Self> {
        let n = samples.len() as f64;
        if samples.len() < 2 {
            return None;
        }
        let mx = samples.iter().map(|s| s.0 as f64).sum::<f64>() / n;
        let my = samples.iter().map(|s| s.1).sum::<f64>() / n;
        let sxx: f64 = samples.iter().map(|s| (s.0 as f64 - mx).powi(2)).sum();
        if sxx == 0.0 {
            return None;
        }
        let sxy: f64 = samples.iter().map(|s| (s.0 as f64 - mx) * (s.1 - my)).sum();
        let slope = sxy / sxx;
        Some(Self { intercept: my - slope * mx, seconds_per_equation: slope })
    }

    pub fn estimate(&self, equations: usize) -> f64 {
        (self.intercept + self.seconds_per_equation * equations as f64).max(0.0)
    }
}
