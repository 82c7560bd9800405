//! Model MD on validation structures under the reference protocol.

use std::collections::BTreeMap;

use alloop_core::md::run_md;
use alloop_core::parallel;
use alloop_core::report::{DiffusionComparison, EvaluationRecord, Payload};

use super::reference::{load_summaries, observe, reference_protocol};
use super::{Ctx, EvaluateParams};
use crate::error::WorkflowError;

pub(super) fn run(ctx: &mut Ctx<'_>, p: &EvaluateParams) -> Result<String, WorkflowError> {
    let summaries = load_summaries(ctx)?;
    let config = ctx.config().clone();
    let model_id = p
        .model
        .clone()
        .or_else(|| ctx.current_model_id())
        .ok_or_else(|| WorkflowError::Precondition("no model registered to evaluate".into()))?;
    let model = ctx.load_model(&model_id)?;
    let structures = ctx.ws.structures()?;
    let ids: Vec<String> = if p.structures.is_empty() {
        let cats = ctx.stage_categories();
        structures.iter().filter(|(i, _)| i.is_validation && cats.contains(&i.category)).map(|(i, _)| i.id.clone()).collect()
    } else {
        p.structures.clone()
    };
    if ids.is_empty() {
        return Err(WorkflowError::Precondition("no validation structures to evaluate".into()));
    }
    let mut targets = Vec::new();
    for id in &ids {
        let (info, c) = structures
            .iter()
            .find(|(i, _)| &i.id == id)
            .ok_or_else(|| WorkflowError::Precondition(format!("unknown structure `{id}`")))?;
        let summary = summaries
            .iter()
            .find(|s| &s.structure_id == id)
            .ok_or_else(|| WorkflowError::Precondition(format!("`{id}` has no reference run")))?;
        targets.push((info, c, summary));
    }
    let species = ctx.ws.species()?;
    let masses = ctx.ws.masses(&species)?;
    let calc = model.calculator();
    let step = ctx.step;
    let runs = parallel::map(&targets, |(info, c, _)| {
        let proto = reference_protocol(&config, &info.id);
        run_md(&format!("e{step:03}_{}", info.id), c, &calc, &masses, &proto, &config.thresholds, None)
    });

    let bound = config.evaluation.density_bound_pct;
    let mut lines = Vec::new();
    let mut passed = 0;
    for ((info, _, summary), r) in targets.iter().zip(runs) {
        let t = r?;
        let rec = ctx.store_trajectory("evaluation", &t, info)?;
        ctx.emit(Payload::Trajectory(rec))?;
        let obs = observe(&t, &masses, &config.evaluation, summary.rdf_r_max);
        let deviation = match (obs.density, summary.density_mean) {
            (Some(m), Some(r)) if r > 0.0 => Some((m - r).abs() / r * 100.0),
            _ => None,
        };
        let rdf_peak_error: BTreeMap<String, f64> = obs
            .rdf_peaks
            .iter()
            .filter_map(|(k, m)| summary.rdf_peaks.get(k).map(|r| (k.clone(), (m - r).abs())))
            .collect();
        let diffusion: BTreeMap<String, DiffusionComparison> = obs
            .diffusion
            .iter()
            .filter_map(|(k, m)| summary.diffusion.get(k).map(|r| (k.clone(), DiffusionComparison { model: *m, reference: *r })))
            .collect();
        let completed = t.is_completed();
        let pass = completed && deviation.is_none_or(|d| d <= bound);
        passed += usize::from(pass);
        lines.push(format!(
            "{} {} (density deviation {})",
            info.id,
            if pass { "pass" } else { "FAIL" },
            match (completed, deviation) {
                (false, _) => format!("n/a, stopped: {}", t.stop_reason().map_or("", |s| s.as_str())),
                (true, Some(d)) => format!("{d:.2}%"),
                (true, None) => "n/a".into(),
            }
        ));
        ctx.emit(Payload::Evaluation(EvaluationRecord {
            structure_id: info.id.clone(),
            model_id: model_id.clone(),
            density_model: obs.density,
            density_reference: summary.density_mean,
            density_deviation_pct: deviation,
            rdf_peak_error,
            diffusion,
            status: if completed { "completed".into() } else { "early_stop".into() },
            reason: t.stop_reason().map(|s| s.as_str().to_string()),
            pass,
        }))?;
    }
    Ok(format!("{model_id}: {passed}/{} passed; {}", targets.len(), lines.join("; ")))
}
