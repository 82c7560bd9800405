//! One executor per action. Each reads the workflow state and a directive,
//! does its work through the core crate and appends the reports the policy
//! reads next.

mod directive;
mod end;
mod evaluate;
mod prune;
mod reference;
mod sampling;
mod select;
mod train;

use alloop_core::frame::Dataset;
use alloop_core::md::Trajectory;
use alloop_core::report::TrajectoryRecord;
use alloop_core::parallel::with_workers;
use alloop_core::potential::SurrogateModel;
use alloop_core::report::{DatasetRecord, Payload};
use alloop_core::seed::derive_seed;
use alloop_core::structgen::Category;
use alloop_core::extxyz;

pub use directive::{
    ActionKind, Directive, EndParams, EvaluateParams, OracleSampleParams, PruneParams, Ratio, ReferenceParams,
    SampleParams, SelectParams, TrainParams, TrainStart,
};
pub use end::{render_text, ActionRow, DatasetRow, EvaluationRow, FinalReport, ModelRow};
pub use reference::{held_out_force_mae, held_out_set, PhysicalSummary, REFERENCE_SUMMARY};
pub use select::{rank_top, selection_count, Candidate};

use crate::config::{Config, Stage};
use crate::error::WorkflowError;
use crate::state::WorkflowState;
use crate::workspace::{StructureInfo, Workspace};

/// What an action sees: the workspace, the mutable state and its step.
pub struct Ctx<'a> {
    pub ws: &'a Workspace,
    pub state: &'a mut WorkflowState,
    pub step: u64,
}

impl Ctx<'_> {
    pub fn config(&self) -> &Config {
        &self.ws.config
    }

    /// Appends a record and applies it to the in-memory registries.
    pub fn emit(&mut self, payload: Payload) -> Result<(), WorkflowError> {
        let rec = self.ws.append(self.step, payload)?;
        self.state.registries.apply(&rec);
        Ok(())
    }

    pub fn seed(&self, job: &str) -> u64 {
        derive_seed(self.config().seed, job)
    }

    pub fn stage(&self) -> Option<&Stage> {
        self.config().policy.stages.get(self.state.stage)
    }

    /// Categories of the current stage, or every category once the
    /// curriculum is exhausted.
    pub fn stage_categories(&self) -> Vec<Category> {
        match self.stage() {
            Some(s) => s.categories.clone(),
            None => {
                let mut all: Vec<Category> =
                    self.config().policy.stages.iter().flat_map(|s| s.categories.iter().copied()).collect();
                all.sort();
                all.dedup();
                all
            }
        }
    }

    pub fn load_model(&self, id: &str) -> Result<SurrogateModel, WorkflowError> {
        let rec = self
            .state
            .registries
            .model(id)
            .ok_or_else(|| WorkflowError::Precondition(format!("model `{id}` is not registered")))?;
        let p = self.ws.path(&rec.path);
        SurrogateModel::load(&p).map_err(|e| WorkflowError::io(&p, e))
    }

    pub fn current_model_id(&self) -> Option<String> {
        self.state.registries.current_model().map(|m| m.model_id.clone())
    }

    pub fn load_dataset(&self, rec: &DatasetRecord) -> Result<Dataset, WorkflowError> {
        let p = self.ws.path(&rec.path);
        let frames = if rec.structure_count == 0 {
            Vec::new()
        } else {
            extxyz::read_labeled(&p).map_err(|e| WorkflowError::Frames(format!("{}: {e}", p.display())))?
        };
        Ok(Dataset::new(rec.dataset_id.clone(), frames, rec.origin.clone()))
    }

    /// Writes a trajectory under `dir/` and returns its record.
    fn store_trajectory(&self, dir: &str, traj: &Trajectory, info: &StructureInfo) -> Result<TrajectoryRecord, WorkflowError> {
        let rel = format!("{dir}/{}.extxyz", traj.trajectory_id);
        let p = self.ws.path(&rel);
        traj.write(&p).map_err(|e| WorkflowError::io(&p, e))?;
        Ok(traj.record(info.category.as_str(), &rel))
    }
}

pub fn dataset_record(ds: &Dataset, path: &str, status: &str) -> DatasetRecord {
    let s = ds.stats();
    DatasetRecord {
        dataset_id: ds.dataset_id.clone(),
        structure_count: s.frame_count,
        total_atoms: s.total_atoms,
        energy_per_atom_min: s.energy_per_atom_min,
        energy_per_atom_max: s.energy_per_atom_max,
        max_force_max: s.max_force_max,
        origin: ds.origin.clone(),
        path: path.into(),
        status: status.into(),
    }
}

/// Runs one directive and returns a one-line outcome.
pub fn execute(ctx: &mut Ctx<'_>, directive: &Directive) -> Result<String, WorkflowError> {
    let workers = ctx.config().workers.unwrap_or(0);
    with_workers(workers, || match directive {
        Directive::ReferenceCalc(_) => reference::run(ctx),
        Directive::OracleSample(p) => sampling::oracle_sample(ctx, p),
        Directive::Sample(p) => sampling::sample(ctx, p),
        Directive::Select(p) => select::run(ctx, p),
        Directive::Train(p) => train::run(ctx, p),
        Directive::Evaluate(p) => evaluate::run(ctx, p),
        Directive::Prune(p) => prune::run(ctx, p),
        Directive::End(p) => end::run(ctx, p),
    })
}
