//! The state digest a policy decides from. Built only from report records
//! and the structure description file.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::actions::ActionKind;
use crate::config::Config;
use crate::error::WorkflowError;
use crate::state::Registries;
use crate::workspace::{StructureInfo, Workspace};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetDigest {
    pub dataset_id: String,
    pub frames: usize,
    pub energy_per_atom_min: f64,
    pub energy_per_atom_max: f64,
    pub status: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDigest {
    pub model_id: String,
    pub parent_id: Option<String>,
    pub step: u64,
    pub force_mae: f64,
    pub energy_mae: f64,
    pub frames: usize,
    pub status: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationDigest {
    pub structure_id: String,
    pub model_id: String,
    pub density_deviation_pct: Option<f64>,
    pub status: String,
    pub pass: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SamplingDigest {
    pub step: u64,
    pub trajectories: Vec<String>,
    pub jobs: usize,
    pub completed: usize,
    pub early_stops_by_reason: BTreeMap<String, usize>,
    pub early_stops_by_category: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryItem {
    pub step: u64,
    pub action: String,
    pub ok: bool,
    pub outcome: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateSummary {
    pub step: u64,
    /// Curriculum stages passed so far.
    pub stage: usize,
    pub stage_name: Option<String>,
    /// Failed evaluations in the current stage since it began or since the
    /// last prune.
    pub stage_failures: usize,
    pub reference_done: bool,
    pub oracle_sample_done: bool,
    pub structures: Vec<StructureInfo>,
    pub datasets: Vec<DatasetDigest>,
    pub models: Vec<ModelDigest>,
    pub current_model: Option<String>,
    /// Records of the latest evaluation.
    pub evaluations: Vec<EvaluationDigest>,
    /// The latest successful sampling.
    pub sampling: Option<SamplingDigest>,
    /// Successful selections since the latest evaluation.
    pub rounds_since_evaluation: usize,
    /// Whether `sampling` happened after the latest evaluation.
    pub sampled_since_evaluation: bool,
    /// Trailing run of failed decisions.
    pub consecutive_failures: usize,
    pub last_action: Option<HistoryItem>,
    /// Last successful action.
    pub last_ok_action: Option<String>,
    pub history: Vec<HistoryItem>,
}

impl StateSummary {
    pub fn build(reg: &Registries, structures: &[StructureInfo], config: &Config) -> Self {
        let ok = |k: ActionKind| reg.actions.iter().any(|a| a.record.ok && a.record.next_task == k.as_str());
        let (stage, stage_failures) = stage_progress(reg);
        let history_all: Vec<HistoryItem> = reg
            .actions
            .iter()
            .map(|a| HistoryItem {
                step: a.step,
                action: a.record.next_task.clone(),
                ok: a.record.ok,
                outcome: a.record.outcome.clone(),
            })
            .collect();
        let k = config.policy.history;
        let history = history_all[history_all.len().saturating_sub(k)..].to_vec();
        let consecutive_failures = history_all.iter().rev().take_while(|h| !h.ok).count();
        let last_eval_step = last_ok_step(reg, ActionKind::Evaluate);
        let evaluations = match last_eval_step {
            Some(s) => reg
                .evaluations
                .iter()
                .filter(|e| e.step == s)
                .map(|e| EvaluationDigest {
                    structure_id: e.record.structure_id.clone(),
                    model_id: e.record.model_id.clone(),
                    density_deviation_pct: e.record.density_deviation_pct,
                    status: e.record.status.clone(),
                    pass: e.record.pass,
                })
                .collect(),
            None => Vec::new(),
        };
        let sampling = last_ok_step(reg, ActionKind::Sample).map(|s| {
            let mut d = SamplingDigest { step: s, ..Default::default() };
            for t in reg.trajectories.iter().filter(|t| t.step == s) {
                d.trajectories.push(t.record.trajectory_id.clone());
                d.jobs += 1;
                match &t.record.reason {
                    None => d.completed += 1,
                    Some(r) => {
                        *d.early_stops_by_reason.entry(r.clone()).or_default() += 1;
                        *d.early_stops_by_category.entry(t.record.category.clone()).or_default() += 1;
                    }
                }
            }
            d
        });
        let after_eval = |s: u64| last_eval_step.is_none_or(|e| s > e);
        let rounds_since_evaluation = reg
            .actions
            .iter()
            .filter(|a| a.record.ok && a.record.next_task == ActionKind::Select.as_str() && after_eval(a.step))
            .count();
        StateSummary {
            step: reg.actions.len() as u64,
            stage,
            stage_name: config.policy.stages.get(stage).map(|s| s.name.clone()),
            stage_failures,
            reference_done: ok(ActionKind::ReferenceCalc),
            oracle_sample_done: ok(ActionKind::OracleSample),
            structures: structures.to_vec(),
            datasets: reg
                .datasets
                .iter()
                .map(|d| DatasetDigest {
                    dataset_id: d.dataset_id.clone(),
                    frames: d.structure_count,
                    energy_per_atom_min: d.energy_per_atom_min,
                    energy_per_atom_max: d.energy_per_atom_max,
                    status: d.status.clone(),
                })
                .collect(),
            models: reg
                .models
                .iter()
                .map(|m| ModelDigest {
                    model_id: m.record.model_id.clone(),
                    parent_id: m.record.parent_id.clone(),
                    step: m.step,
                    force_mae: m.record.force_mae,
                    energy_mae: m.record.energy_mae,
                    frames: m.record.frame_count,
                    status: m.record.status.clone(),
                })
                .collect(),
            current_model: reg.current_model().map(|m| m.model_id.clone()),
            evaluations,
            sampled_since_evaluation: sampling.as_ref().is_some_and(|s| after_eval(s.step)),
            sampling,
            rounds_since_evaluation,
            consecutive_failures,
            last_action: history_all.last().cloned(),
            last_ok_action: history_all.iter().rev().find(|h| h.ok).map(|h| h.action.clone()),
            history,
        }
    }

    pub fn model(&self, id: &str) -> Option<&ModelDigest> {
        self.models.iter().find(|m| m.model_id == id)
    }

    /// Relative force-MAE drop of the current model versus its parent.
    pub fn mae_improvement(&self) -> Option<f64> {
        let cur = self.model(self.current_model.as_deref()?)?;
        let parent = self.model(cur.parent_id.as_deref()?)?;
        (parent.force_mae > 0.0).then(|| (parent.force_mae - cur.force_mae) / parent.force_mae)
    }

    pub fn registered_models(&self) -> usize {
        self.models.iter().filter(|m| m.status == "registered").count()
    }

    pub fn has_active_data(&self) -> bool {
        self.datasets.iter().any(|d| d.status == "active" && d.frames > 0)
    }
}

fn last_ok_step(reg: &Registries, kind: ActionKind) -> Option<u64> {
    reg.actions.iter().rev().find(|a| a.record.ok && a.record.next_task == kind.as_str()).map(|a| a.step)
}

/// Stages passed and failures in the current stage. A successful
/// evaluation whose records all pass advances the stage; a prune clears
/// the failure count.
pub fn stage_progress(reg: &Registries) -> (usize, usize) {
    let (mut stage, mut fails) = (0, 0);
    for a in reg.actions.iter().filter(|a| a.record.ok) {
        match ActionKind::parse(&a.record.next_task) {
            Some(ActionKind::Evaluate) => {
                let mut recs = reg.evaluations.iter().filter(|e| e.step == a.step).peekable();
                if recs.peek().is_some() && recs.all(|e| e.record.pass) {
                    stage += 1;
                    fails = 0;
                } else {
                    fails += 1;
                }
            }
            Some(ActionKind::Prune) => fails = 0,
            _ => {}
        }
    }
    (stage, fails)
}

/// Summary of an on-disk workspace, replayed from its report files.
pub fn assemble_state(ws: &Workspace) -> Result<StateSummary, WorkflowError> {
    let reg = Registries::replay(&ws.reports_dir(), u64::MAX)?;
    Ok(StateSummary::build(&reg, &ws.structure_infos()?, &ws.config))
}
