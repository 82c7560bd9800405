//! Outlier removal and model rollback. Removed frames are moved under
//! `pruned/`, never deleted.

use std::collections::BTreeMap;

use alloop_core::extxyz;
use alloop_core::potential::detect_outliers;
use alloop_core::report::Payload;
use serde_json::json;

use super::{dataset_record, Ctx, PruneParams};
use crate::error::WorkflowError;

pub const PRUNE_VARIANT: &str = "PruneRecord";

pub(super) fn run(ctx: &mut Ctx<'_>, p: &PruneParams) -> Result<String, WorkflowError> {
    let registered: Vec<_> =
        ctx.state.registries.models.iter().map(|m| m.record.clone()).filter(|m| m.status == "registered").collect();
    let Some(newest) = registered.last().cloned() else {
        return Err(WorkflowError::Precondition("no registered model to prune against".into()));
    };
    let mut compared = p.models.clone();
    if compared.is_empty() {
        compared.push(newest.model_id.clone());
        compared.extend(newest.parent_id.clone());
    }
    for id in &compared {
        if ctx.state.registries.model(id).is_none() {
            return Err(WorkflowError::Precondition(format!("model `{id}` is not registered")));
        }
    }

    let mut rolled_back = None;
    if p.rollback {
        if registered.len() < 2 {
            return Err(WorkflowError::Precondition("cannot roll back the only registered model".into()));
        }
        let mut r = newest.clone();
        r.status = "rolled_back".into();
        rolled_back = Some(r.model_id.clone());
        ctx.emit(Payload::Train(r))?;
    }

    // Residuals of the model that saw the suspect frames in training.
    let judge = ctx.load_model(&compared[0])?;
    let suspects: Vec<_> = if p.datasets.is_empty() {
        ctx.state.registries.active_datasets().cloned().collect()
    } else {
        p.datasets
            .iter()
            .map(|id| {
                ctx.state
                    .registries
                    .active_datasets()
                    .find(|d| &d.dataset_id == id)
                    .cloned()
                    .ok_or_else(|| WorkflowError::Precondition(format!("no active dataset `{id}`")))
            })
            .collect::<Result<_, _>>()?
    };
    let loaded = suspects.iter().map(|r| ctx.load_dataset(r)).collect::<Result<Vec<_>, _>>()?;
    let nonempty: Vec<_> = loaded.iter().filter(|d| !d.is_empty()).collect();
    let outliers = if nonempty.is_empty() { Vec::new() } else { detect_outliers(&judge, &nonempty, ctx.config().training.z_max)? };

    let mut removed: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for o in &outliers {
        removed.entry(o.dataset_id.clone()).or_default().push(o.frame_index);
    }
    for (rec, mut ds) in suspects.into_iter().zip(loaded) {
        let Some(idx) = removed.get_mut(&rec.dataset_id) else { continue };
        idx.sort_unstable();
        idx.dedup();
        let gone = ds.remove_frames(idx);
        let moved = ctx.ws.path(&format!("pruned/{}_s{:03}.extxyz", rec.dataset_id, ctx.step));
        extxyz::write_labeled(&moved, &gone).map_err(|e| WorkflowError::io(&moved, e))?;
        let path = ctx.ws.path(&rec.path);
        let tmp = path.with_extension("extxyz.tmp");
        extxyz::write_labeled(&tmp, &ds.frames).map_err(|e| WorkflowError::io(&tmp, e))?;
        std::fs::rename(&tmp, &path).map_err(|e| WorkflowError::io(&path, e))?;
        let status = if ds.is_empty() { "pruned" } else { "active" };
        ctx.emit(Payload::Dataset(dataset_record(&ds, &rec.path, status)))?;
    }
    let restored = ctx.current_model_id();
    ctx.state.current_model = restored.clone();
    ctx.emit(Payload::Raw {
        variant: PRUNE_VARIANT.into(),
        payload: json!({
            "models_compared": compared,
            "removed": removed,
            "rolled_back": rolled_back,
            "current_model": restored,
        }),
    })?;
    let n: usize = removed.values().map(Vec::len).sum();
    Ok(format!(
        "removed {n} frames from {} datasets{}",
        removed.len(),
        match (&rolled_back, &restored) {
            (Some(r), Some(c)) => format!("; rolled back {r}, current model {c}"),
            _ => String::new(),
        }
    ))
}
