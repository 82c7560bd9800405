//! Final report: written as JSON and as plain text, with no timestamps so
//! reruns compare byte for byte.

use std::collections::BTreeMap;
use std::fmt::Write;

use alloop_core::report::DiffusionComparison;
use serde::{Deserialize, Serialize};

use super::{ActionKind, Ctx, EndParams};
use crate::error::WorkflowError;
use crate::fsutil;
use crate::state::Phase;
use crate::workspace::{FINAL_REPORT_FILE, FINAL_REPORT_TEXT};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRow {
    pub step: u64,
    pub model_id: String,
    pub parent_id: Option<String>,
    pub mode: String,
    pub frame_count: usize,
    pub energy_mae: f64,
    pub force_mae: f64,
    pub status: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRow {
    pub dataset_id: String,
    pub frames: usize,
    pub status: String,
    pub path: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationRow {
    pub step: u64,
    pub structure_id: String,
    pub model_id: String,
    pub density_deviation_pct: Option<f64>,
    pub rdf_peak_error: BTreeMap<String, f64>,
    pub diffusion: BTreeMap<String, DiffusionComparison>,
    pub status: String,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionRow {
    pub step: u64,
    pub action: String,
    pub ok: bool,
    pub outcome: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalReport {
    pub success: bool,
    pub reason: String,
    pub final_model: Option<String>,
    pub steps: u64,
    pub models: Vec<ModelRow>,
    pub datasets: Vec<DatasetRow>,
    pub evaluations: Vec<EvaluationRow>,
    pub actions: Vec<ActionRow>,
}

impl FinalReport {
    pub fn load(path: &std::path::Path) -> Result<Self, WorkflowError> {
        fsutil::read_json(path)
    }
}

pub fn end_outcome(success: bool, reason: &str) -> String {
    format!("{} ({reason})", if success { "success" } else { "failure" })
}

pub(super) fn run(ctx: &mut Ctx<'_>, p: &EndParams) -> Result<String, WorkflowError> {
    let reason = p.reason.clone().unwrap_or_else(|| if p.success { "finished".into() } else { "stopped".into() });
    let reg = &ctx.state.registries;
    // The newest model with a passing evaluation, else the current one.
    let passing = reg.evaluations.iter().rev().find(|e| e.record.pass).map(|e| e.record.model_id.clone());
    let final_model = if p.success { passing.or_else(|| ctx.current_model_id()) } else { ctx.current_model_id() };
    let outcome = end_outcome(p.success, &reason);
    let mut actions: Vec<ActionRow> = reg
        .actions
        .iter()
        .map(|a| ActionRow {
            step: a.step,
            action: a.record.next_task.clone(),
            ok: a.record.ok,
            outcome: a.record.outcome.clone(),
        })
        .collect();
    actions.push(ActionRow {
        step: ctx.step,
        action: ActionKind::End.as_str().into(),
        ok: true,
        outcome: outcome.clone(),
    });
    let report = FinalReport {
        success: p.success,
        reason,
        final_model,
        steps: ctx.step + 1,
        models: reg
            .models
            .iter()
            .map(|m| ModelRow {
                step: m.step,
                model_id: m.record.model_id.clone(),
                parent_id: m.record.parent_id.clone(),
                mode: m.record.mode.clone(),
                frame_count: m.record.frame_count,
                energy_mae: m.record.energy_mae,
                force_mae: m.record.force_mae,
                status: m.record.status.clone(),
            })
            .collect(),
        datasets: reg
            .datasets
            .iter()
            .map(|d| DatasetRow {
                dataset_id: d.dataset_id.clone(),
                frames: d.structure_count,
                status: d.status.clone(),
                path: d.path.clone(),
            })
            .collect(),
        evaluations: reg
            .evaluations
            .iter()
            .map(|e| EvaluationRow {
                step: e.step,
                structure_id: e.record.structure_id.clone(),
                model_id: e.record.model_id.clone(),
                density_deviation_pct: e.record.density_deviation_pct,
                rdf_peak_error: e.record.rdf_peak_error.clone(),
                diffusion: e.record.diffusion.clone(),
                status: e.record.status.clone(),
                pass: e.record.pass,
            })
            .collect(),
        actions,
    };
    fsutil::write_json(&ctx.ws.path(FINAL_REPORT_FILE), &report)?;
    fsutil::write_atomic(&ctx.ws.path(FINAL_REPORT_TEXT), render_text(&report).as_bytes())?;
    ctx.state.phase = Phase::Ended;
    Ok(outcome)
}

pub fn render_text(r: &FinalReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "Result: {} ({})", if r.success { "SUCCESS" } else { "FAILURE" }, r.reason);
    let _ = writeln!(s, "Final model: {}", r.final_model.as_deref().unwrap_or("none"));
    let _ = writeln!(s, "Decision steps: {}", r.steps);
    let _ = writeln!(s, "\nModels");
    if r.models.is_empty() {
        let _ = writeln!(s, "  (none)");
    }
    for m in &r.models {
        let _ = writeln!(
            s,
            "  step {:>3}  {:<10} parent {:<10} {:<8} frames {:>6}  force MAE {:.5}  energy MAE {:.6}  {}",
            m.step,
            m.model_id,
            m.parent_id.as_deref().unwrap_or("-"),
            m.mode,
            m.frame_count,
            m.force_mae,
            m.energy_mae,
            m.status
        );
    }
    let _ = writeln!(s, "\nDatasets");
    for d in &r.datasets {
        let _ = writeln!(s, "  {:<10} frames {:>6}  {:<7} {}", d.dataset_id, d.frames, d.status, d.path);
    }
    let _ = writeln!(s, "\nEvaluations");
    for e in &r.evaluations {
        let dens = e.density_deviation_pct.map_or("n/a".to_string(), |d| format!("{d:.2}%"));
        let diff: Vec<String> =
            e.diffusion.iter().map(|(k, d)| format!("D({k}) {:.3e} vs {:.3e} cm2/s", d.model, d.reference)).collect();
        let _ = writeln!(
            s,
            "  step {:>3}  {:<16} {:<10} density dev {:>8}  {:<11} {}  {}",
            e.step,
            e.structure_id,
            e.model_id,
            dens,
            e.status,
            if e.pass { "pass" } else { "FAIL" },
            diff.join(", ")
        );
    }
    let _ = writeln!(s, "\nActions");
    for a in &r.actions {
        let _ = writeln!(s, "  {:>3} {:<15} {} {}", a.step, a.action, if a.ok { "ok  " } else { "FAIL" }, a.outcome);
    }
    s
}
