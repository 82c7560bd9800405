use alloop_core::potential::{train, TrainRequest};
use alloop_core::report::Payload;

use super::{Ctx, TrainParams, TrainStart};
use crate::error::WorkflowError;

pub(super) fn run(ctx: &mut Ctx<'_>, p: &TrainParams) -> Result<String, WorkflowError> {
    let config = ctx.config().clone();
    let start = match (&p.start, ctx.current_model_id()) {
        (Some(s), _) => s.clone(),
        (None, Some(m)) => TrainStart::FineTune(m),
        (None, None) => TrainStart::FromScratch,
    };
    let first = ctx.state.registries.models.is_empty();
    let mode = p.mode.unwrap_or(if first { config.policy.first_train_mode } else { config.policy.loop_train_mode });

    let reg = &ctx.state.registries;
    let mut records: Vec<_> = match (&start, p.datasets.is_empty()) {
        (TrainStart::FromScratch, false) => p
            .datasets
            .iter()
            .map(|id| {
                reg.datasets
                    .iter()
                    .find(|d| &d.dataset_id == id && d.status == "active")
                    .cloned()
                    .ok_or_else(|| WorkflowError::Precondition(format!("no active dataset `{id}`")))
            })
            .collect::<Result<_, _>>()?,
        _ => reg.active_datasets().cloned().collect(),
    };
    let parent = match &start {
        TrainStart::FromScratch => None,
        TrainStart::FineTune(id) => {
            let m = ctx.load_model(id)?;
            // Datasets emptied by pruning still belong to the lineage.
            for d in &m.trained_on {
                if !records.iter().any(|r| &r.dataset_id == d) {
                    if let Some(r) = reg.datasets.iter().find(|r| &r.dataset_id == d) {
                        records.push(r.clone());
                    }
                }
            }
            Some(m)
        }
    };
    if records.is_empty() {
        return Err(WorkflowError::Precondition("no dataset registered to train on".into()));
    }
    let datasets = records.iter().map(|r| ctx.load_dataset(r)).collect::<Result<Vec<_>, _>>()?;
    let model_id = format!("model_{:03}", ctx.step);
    let out = train(&TrainRequest {
        model_id: model_id.clone(),
        datasets: datasets.iter().collect(),
        species: ctx.ws.species()?,
        basis: config.basis.clone(),
        mode,
        parent: parent.as_ref(),
        lambda: config.training.lambda,
        beta: config.training.beta,
        z_max: config.training.z_max,
    })?;
    let path = ctx.ws.path(&out.record.path);
    out.model.save(&path).map_err(|e| WorkflowError::io(&path, e))?;
    let r = out.record.clone();
    ctx.emit(Payload::Train(out.record))?;
    ctx.state.current_model = Some(model_id.clone());
    Ok(format!(
        "{model_id} ({}, {}): force MAE {:.5} eV/A, energy MAE {:.6} eV/atom on {} frames from {} datasets; {} outliers",
        match &start {
            TrainStart::FromScratch => "from scratch".to_string(),
            TrainStart::FineTune(p) => format!("fine-tuned from {p}"),
        },
        mode.as_str(),
        r.force_mae,
        r.energy_mae,
        r.frame_count,
        r.trained_on.len(),
        r.outlier_count
    ))
}
