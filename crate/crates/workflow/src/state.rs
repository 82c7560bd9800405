//! Persisted workflow state and the registries rebuilt from report logs.

use std::path::Path;

use alloop_core::report::{
    read_records, DatasetRecord, DecisionRecord, EvaluationRecord, Payload, ReportRecord, TrainRecord,
    TrajectoryRecord,
};
use serde::{Deserialize, Serialize};

use crate::error::WorkflowError;
use crate::fsutil;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Preparing,
    Autonomous,
    Ended,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stepped<T> {
    pub step: u64,
    pub record: T,
}

/// Report files, one per record variant.
pub const REPORT_FILES: &[&str] =
    &["dataset.jsonl", "train.jsonl", "trajectory.jsonl", "evaluation.jsonl", "decision.jsonl", "prune.jsonl"];

pub fn report_file(payload: &Payload) -> &'static str {
    match payload {
        Payload::Dataset(_) => "dataset.jsonl",
        Payload::Train(_) => "train.jsonl",
        Payload::Trajectory(_) => "trajectory.jsonl",
        Payload::Evaluation(_) => "evaluation.jsonl",
        Payload::Decision(_) => "decision.jsonl",
        Payload::Raw { .. } => "prune.jsonl",
    }
}

/// Datasets, models, trajectories, evaluations and the action log. Later
/// records for an id replace earlier ones in place.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Registries {
    pub datasets: Vec<DatasetRecord>,
    pub models: Vec<Stepped<TrainRecord>>,
    pub trajectories: Vec<Stepped<TrajectoryRecord>>,
    pub evaluations: Vec<Stepped<EvaluationRecord>>,
    pub actions: Vec<Stepped<DecisionRecord>>,
}

impl Registries {
    pub fn apply(&mut self, r: &ReportRecord) {
        match &r.payload {
            Payload::Dataset(d) => match self.datasets.iter_mut().find(|x| x.dataset_id == d.dataset_id) {
                Some(slot) => *slot = d.clone(),
                None => self.datasets.push(d.clone()),
            },
            Payload::Train(t) => match self.models.iter_mut().find(|x| x.record.model_id == t.model_id) {
                // Status changes keep the registration step.
                Some(slot) => slot.record = t.clone(),
                None => self.models.push(Stepped { step: r.step, record: t.clone() }),
            },
            Payload::Trajectory(t) => self.trajectories.push(Stepped { step: r.step, record: t.clone() }),
            Payload::Evaluation(e) => self.evaluations.push(Stepped { step: r.step, record: e.clone() }),
            Payload::Decision(d) => self.actions.push(Stepped { step: r.step, record: d.clone() }),
            Payload::Raw { .. } => {}
        }
    }

    /// Rebuilds registries from `reports/`, keeping records with
    /// `step < limit`.
    pub fn replay(reports: &Path, limit: u64) -> Result<Self, WorkflowError> {
        let mut all = Vec::new();
        for (order, name) in REPORT_FILES.iter().enumerate() {
            let records = read_records(&reports.join(name))?.strict()?;
            all.extend(records.into_iter().filter(|r| r.step < limit).enumerate().map(|(k, r)| (r.step, order, k, r)));
        }
        all.sort_by_key(|x| (x.0, x.1, x.2));
        let mut reg = Registries::default();
        for (_, _, _, r) in &all {
            reg.apply(r);
        }
        Ok(reg)
    }

    pub fn active_datasets(&self) -> impl Iterator<Item = &DatasetRecord> {
        self.datasets.iter().filter(|d| d.status == "active")
    }

    /// Newest model still registered.
    pub fn current_model(&self) -> Option<&TrainRecord> {
        self.models.iter().rev().map(|m| &m.record).find(|m| m.status == "registered")
    }

    pub fn model(&self, id: &str) -> Option<&TrainRecord> {
        self.models.iter().map(|m| &m.record).find(|m| m.model_id == id)
    }

    pub fn action_done(&self, action: &str) -> bool {
        self.actions.iter().any(|a| a.record.ok && a.record.next_task == action)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Markers {
    pub reference_calc_done: bool,
    pub oracle_sample_done: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkflowState {
    pub workspace: String,
    pub master_seed: u64,
    pub phase: Phase,
    /// Completed decisions.
    pub step: u64,
    pub stage: usize,
    pub markers: Markers,
    pub current_model: Option<String>,
    pub registries: Registries,
}

impl WorkflowState {
    pub fn new(workspace: &Path, master_seed: u64) -> Self {
        Self {
            workspace: workspace.display().to_string(),
            master_seed,
            phase: Phase::Preparing,
            step: 0,
            stage: 0,
            markers: Markers::default(),
            current_model: None,
            registries: Registries::default(),
        }
    }

    pub fn load(path: &Path) -> Result<Self, WorkflowError> {
        fsutil::read_json(path)
    }

    /// Write-new-then-rename.
    pub fn save(&self, path: &Path) -> Result<(), WorkflowError> {
        fsutil::write_json(path, self)
    }

    /// Checks the invariants tying the counters to the registries.
    pub fn check(&self) -> Result<(), WorkflowError> {
        if self.registries.actions.len() as u64 != self.step {
            return Err(WorkflowError::Consistency(format!(
                "step counter {} but {} logged decisions",
                self.step,
                self.registries.actions.len()
            )));
        }
        let current = self.registries.current_model().map(|m| m.model_id.clone());
        if current != self.current_model {
            return Err(WorkflowError::Consistency(format!(
                "current model {:?} but registry says {:?}",
                self.current_model, current
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloop_core::report::append_record;

    fn train(id: &str, parent: Option<&str>, status: &str) -> Payload {
        Payload::Train(TrainRecord {
            model_id: id.into(),
            parent_id: parent.map(Into::into),
            energy_mae: 0.1,
            force_mae: 0.2,
            outlier_count: 0,
            frame_count: 3,
            trained_on: vec!["init".into()],
            mode: "accurate".into(),
            epochs: 1,
            path: format!("models/{id}.json"),
            status: status.into(),
        })
    }

    #[test]
    fn replay_applies_status_updates_and_limits() {
        let dir = tempfile::tempdir().unwrap();
        let r = dir.path();
        append_record(&r.join("train.jsonl"), &ReportRecord::now(2, train("m2", None, "registered"))).unwrap();
        append_record(&r.join("train.jsonl"), &ReportRecord::now(5, train("m5", Some("m2"), "registered"))).unwrap();
        append_record(&r.join("train.jsonl"), &ReportRecord::now(7, train("m5", Some("m2"), "rolled_back"))).unwrap();
        let all = Registries::replay(r, u64::MAX).unwrap();
        assert_eq!(all.models.len(), 2);
        assert_eq!(all.models[1].step, 5);
        assert_eq!(all.current_model().unwrap().model_id, "m2");
        let early = Registries::replay(r, 7).unwrap();
        assert_eq!(early.current_model().unwrap().model_id, "m5");
    }

    #[test]
    fn state_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = WorkflowState::new(dir.path(), 4);
        s.registries.apply(&ReportRecord::now(0, train("m0", None, "registered")));
        s.current_model = Some("m0".into());
        let p = dir.path().join("workflow_state.json");
        s.save(&p).unwrap();
        assert_eq!(WorkflowState::load(&p).unwrap(), s);
        assert!(s.check().is_ok());
        s.step = 1;
        assert!(matches!(s.check(), Err(WorkflowError::Consistency(_))));
    }
}
