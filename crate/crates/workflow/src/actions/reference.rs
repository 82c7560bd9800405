//! Oracle MD on the validation structures; the ground truth every later
//! evaluation is compared against.

use std::collections::BTreeMap;

use alloop_core::elements::MassTable;
use alloop_core::geometry::min_pair_distance;
use alloop_core::md::{density_series, diffusion_coefficient, mean, msd, rdf, run_md, MdProtocol, Trajectory};
use alloop_core::parallel;
use alloop_core::report::Payload;
use alloop_core::structgen::Category;
use serde::{Deserialize, Serialize};

use super::Ctx;
use crate::config::{Config, EvaluationSettings};
use crate::error::WorkflowError;
use crate::fsutil;

pub const REFERENCE_SUMMARY: &str = "eval_reference/summary.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhysicalSummary {
    pub structure_id: String,
    pub category: Category,
    pub trajectory_id: String,
    pub snapshot_count: usize,
    /// g/cm³ over the post-equilibration snapshots.
    pub density_mean: Option<f64>,
    pub density_min: Option<f64>,
    pub density_max: Option<f64>,
    /// eV/atom.
    pub energy_per_atom_mean: f64,
    pub energy_per_atom_min: f64,
    pub energy_per_atom_max: f64,
    /// Å, closest pair over all snapshots.
    pub min_distance: f64,
    /// Å; evaluations reuse this range.
    pub rdf_r_max: f64,
    /// Å, first-peak position per `A-B` pair.
    pub rdf_peaks: BTreeMap<String, f64>,
    /// cm²/s per species.
    pub diffusion: BTreeMap<String, f64>,
}

/// Observables shared by reference and evaluation runs.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Observed {
    pub density: Option<f64>,
    pub rdf_peaks: BTreeMap<String, f64>,
    pub diffusion: BTreeMap<String, f64>,
}

/// RDF range: the configured limit, capped at half the narrowest cell width
/// seen in the run.
pub(crate) fn rdf_range(traj: &Trajectory, settings: &EvaluationSettings) -> f64 {
    traj.frames.iter().map(|s| s.config.cell.half_min_width()).fold(settings.rdf_r_max, f64::min)
}

pub(crate) fn observe(traj: &Trajectory, masses: &MassTable, settings: &EvaluationSettings, r_max: f64) -> Observed {
    let density = density_series(traj, masses).ok().filter(|d| !d.is_empty()).map(|d| mean(&d));
    let mut rdf_peaks = BTreeMap::new();
    for [a, b] in &settings.rdf_pairs {
        if let Some(peak) = rdf(traj, (a, b), r_max, settings.rdf_bins).ok().and_then(|g| g.first_peak()) {
            rdf_peaks.insert(format!("{a}-{b}"), peak);
        }
    }
    let mut diffusion = BTreeMap::new();
    for s in &settings.diffusion_species {
        if let Some(d) = msd(traj, s).ok().and_then(|c| diffusion_coefficient(&c, settings.msd_fit_fraction, 3).ok()) {
            diffusion.insert(s.clone(), d);
        }
    }
    Observed { density, rdf_peaks, diffusion }
}

/// The protocol shared by the reference run and every evaluation of `id`.
pub(crate) fn reference_protocol(config: &Config, id: &str) -> MdProtocol {
    let r = &config.reference;
    config.md.protocol(r.ensemble, r.temperature, &r.run, config.seeds().child_seed(&format!("reference/{id}")))
}

pub(crate) fn load_summaries(ctx: &Ctx<'_>) -> Result<Vec<PhysicalSummary>, WorkflowError> {
    let p = ctx.ws.path(REFERENCE_SUMMARY);
    if !ctx.state.markers.reference_calc_done || !p.is_file() {
        return Err(WorkflowError::Precondition("reference runs are missing; run reference_calc first".into()));
    }
    fsutil::read_json(&p)
}

pub(super) fn run(ctx: &mut Ctx<'_>) -> Result<String, WorkflowError> {
    if ctx.state.markers.reference_calc_done {
        return Err(WorkflowError::Precondition("reference_calc runs once per workspace and already ran".into()));
    }
    let structures = ctx.ws.structures()?;
    let targets: Vec<_> = structures.iter().filter(|(i, _)| i.is_validation).collect();
    if targets.is_empty() {
        return Err(WorkflowError::Precondition("no validation structures".into()));
    }
    let config = ctx.config().clone();
    let species = ctx.ws.species()?;
    let masses = ctx.ws.masses(&species)?;
    let oracle = config.oracle.resolve(species.iter().map(String::as_str))?;
    let runs = parallel::map(&targets, |(info, c)| {
        let p = reference_protocol(&config, &info.id);
        run_md(&format!("ref_{}", info.id), c, &oracle, &masses, &p, &config.thresholds, None)
    });
    let mut trajs = Vec::with_capacity(runs.len());
    for ((info, _), r) in targets.iter().zip(runs) {
        let t = r?;
        if let Some(reason) = t.stop_reason() {
            return Err(WorkflowError::ReferenceUnstable { structure: info.id.clone(), reason: reason.as_str().into() });
        }
        trajs.push(t);
    }

    let mut summaries = Vec::new();
    for ((info, _), t) in targets.iter().zip(&trajs) {
        let rec = ctx.store_trajectory("eval_reference", t, info)?;
        ctx.emit(Payload::Trajectory(rec))?;
        let r_max = rdf_range(t, &config.evaluation);
        let obs = observe(t, &masses, &config.evaluation, r_max);
        let dens = density_series(t, &masses).ok();
        let epa: Vec<f64> = t.frames.iter().map(|s| s.potential_energy / s.config.len() as f64).collect();
        let min_d = t.frames.iter().map(|s| min_pair_distance(&s.config.cell, &s.config.positions)).fold(f64::INFINITY, f64::min);
        summaries.push(PhysicalSummary {
            structure_id: info.id.clone(),
            category: info.category,
            trajectory_id: t.trajectory_id.clone(),
            snapshot_count: t.frames.len(),
            density_mean: obs.density,
            density_min: dens.as_ref().map(|d| d.iter().copied().fold(f64::INFINITY, f64::min)),
            density_max: dens.as_ref().map(|d| d.iter().copied().fold(f64::NEG_INFINITY, f64::max)),
            energy_per_atom_mean: mean(&epa),
            energy_per_atom_min: epa.iter().copied().fold(f64::INFINITY, f64::min),
            energy_per_atom_max: epa.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            min_distance: min_d,
            rdf_r_max: r_max,
            rdf_peaks: obs.rdf_peaks,
            diffusion: obs.diffusion,
        });
    }
    fsutil::write_json(&ctx.ws.path(REFERENCE_SUMMARY), &summaries)?;
    ctx.state.markers.reference_calc_done = true;
    let dens: Vec<String> = summaries
        .iter()
        .map(|s| format!("{} {:.3}", s.structure_id, s.density_mean.unwrap_or(f64::NAN)))
        .collect();
    Ok(format!("{} reference runs completed; mean density g/cm3: {}", summaries.len(), dens.join(", ")))
}

/// Every reference snapshot, oracle-labeled. No model is trained on these
/// frames, so they serve as a held-out set.
pub fn held_out_set(ws: &crate::workspace::Workspace) -> Result<alloop_core::frame::Dataset, WorkflowError> {
    let dir = ws.path("eval_reference");
    let mut configs = Vec::new();
    let mut origin = Vec::new();
    for info in ws.structure_infos()?.iter().filter(|i| i.is_validation) {
        let p = dir.join(format!("ref_{}.extxyz", info.id));
        let frames = alloop_core::extxyz::read_file(&p).map_err(|e| WorkflowError::Workspace(format!("{}: {e}", p.display())))?;
        configs.extend(frames.into_iter().map(|f| f.into_config()));
        origin.push(format!("ref_{}", info.id));
    }
    Ok(alloop_core::oracle::label_frames("held_out", &configs, &ws.config.oracle, origin)?)
}

/// Force MAE of a registered model on [`held_out_set`].
pub fn held_out_force_mae(
    ws: &crate::workspace::Workspace,
    held_out: &alloop_core::frame::Dataset,
    model_id: &str,
) -> Result<f64, WorkflowError> {
    let p = ws.path(&format!("models/{model_id}.json"));
    let model = alloop_core::potential::SurrogateModel::load(&p).map_err(|e| WorkflowError::io(&p, e))?;
    let m = alloop_core::potential::evaluate_metrics(&model, &[held_out]).map_err(|e| WorkflowError::Workspace(e.to_string()))?;
    Ok(m.force_mae)
}
