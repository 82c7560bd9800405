//! Max-force-error selection from sampled trajectories.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use alloop_core::extxyz;
use alloop_core::frame::Dataset;
use alloop_core::oracle::label_frames;
use alloop_core::potential::frame_residuals;
use alloop_core::report::Payload;

use super::{dataset_record, ActionKind, Ctx, Ratio, SelectParams};
use crate::error::WorkflowError;

/// `ceil(ratio · n)`, with a guard against products such as
/// `0.075 · 1000 = 75.00000000000001`.
pub fn selection_count(n: usize, ratio: f64) -> usize {
    ((ratio * n as f64 - 1e-9).ceil().max(0.0) as usize).min(n)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub trajectory_id: String,
    pub frame_index: usize,
    pub category: String,
    /// eV/Å, max over atoms of the force-error norm.
    pub error: f64,
}

fn by_rank(a: &Candidate, b: &Candidate) -> Ordering {
    b.error
        .total_cmp(&a.error)
        .then_with(|| a.trajectory_id.cmp(&b.trajectory_id))
        .then_with(|| a.frame_index.cmp(&b.frame_index))
}

/// Indices of the `k` highest-error candidates, highest first; ties go to
/// the smaller (trajectory id, frame index).
pub fn rank_top(cands: &[Candidate], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..cands.len()).collect();
    idx.sort_by(|&a, &b| by_rank(&cands[a], &cands[b]));
    idx.truncate(k);
    idx
}

fn check_ratio(r: f64, what: &str) -> Result<(), WorkflowError> {
    if r > 0.0 && r <= 1.0 {
        Ok(())
    } else {
        Err(WorkflowError::Directive(format!("{what} {r} is outside (0, 1]")))
    }
}

/// Trajectories of the most recent successful sampling.
fn latest_sampled(ctx: &Ctx<'_>) -> Vec<String> {
    let reg = &ctx.state.registries;
    let Some(step) = reg.actions.iter().rev().find(|a| a.record.ok && a.record.next_task == ActionKind::Sample.as_str()).map(|a| a.step)
    else {
        return Vec::new();
    };
    reg.trajectories.iter().filter(|t| t.step == step).map(|t| t.record.trajectory_id.clone()).collect()
}

pub(super) fn run(ctx: &mut Ctx<'_>, p: &SelectParams) -> Result<String, WorkflowError> {
    let config = ctx.config().clone();
    let ratio = p.ratio.unwrap_or(Ratio::Fraction(config.policy.select_ratio));
    if let Ratio::Fraction(r) = ratio {
        check_ratio(r, "ratio")?;
    }
    for (c, r) in &p.category_ratios {
        check_ratio(*r, &format!("ratio for `{c}`"))?;
    }
    let ids = if p.trajectories.is_empty() { latest_sampled(ctx) } else { p.trajectories.clone() };
    if ids.is_empty() {
        return Err(WorkflowError::Precondition("no trajectories to select from; sample first".into()));
    }

    let mut configs = Vec::new();
    let mut cands = Vec::new();
    for id in &ids {
        let rec = ctx
            .state
            .registries
            .trajectories
            .iter()
            .rev()
            .find(|t| &t.record.trajectory_id == id)
            .map(|t| t.record.clone())
            .ok_or_else(|| WorkflowError::Precondition(format!("unknown trajectory `{id}`")))?;
        let path = ctx.ws.path(&rec.path);
        let frames = extxyz::read_file(&path).map_err(|e| WorkflowError::Frames(format!("{}: {e}", path.display())))?;
        for (k, f) in frames.into_iter().enumerate() {
            cands.push(Candidate { trajectory_id: id.clone(), frame_index: k, category: rec.category.clone(), error: 0.0 });
            configs.push(f.into_config());
        }
    }
    if configs.is_empty() {
        return Err(WorkflowError::Precondition("the named trajectories hold no frames".into()));
    }
    let dataset_id = format!("sel_{:03}", ctx.step);
    let labeled = label_frames(&dataset_id, &configs, &config.oracle, ids.clone())?;
    let model = match (ratio, ctx.current_model_id()) {
        (_, Some(m)) => Some(ctx.load_model(&m)?),
        (Ratio::All, None) => None,
        (Ratio::Fraction(_), None) => {
            return Err(WorkflowError::Precondition("ranking by error needs a trained model".into()));
        }
    };
    if let Some(m) = &model {
        for r in frame_residuals(m, &[&labeled])? {
            cands[r.index].error = r.max_force;
        }
    }

    let n = cands.len();
    let mut chosen: Vec<usize> = match ratio {
        Ratio::All => (0..n).collect(),
        Ratio::Fraction(base) if p.category_ratios.is_empty() => rank_top(&cands, selection_count(n, base)),
        Ratio::Fraction(base) => {
            let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
            for (k, c) in cands.iter().enumerate() {
                groups.entry(c.category.as_str()).or_default().push(k);
            }
            let mut out = Vec::new();
            for (cat, members) in groups {
                let r = p.category_ratios.get(cat).copied().unwrap_or(base);
                let sub: Vec<Candidate> = members.iter().map(|&k| cands[k].clone()).collect();
                out.extend(rank_top(&sub, selection_count(sub.len(), r)).into_iter().map(|k| members[k]));
            }
            out
        }
    };
    chosen.sort_by(|&a, &b| by_rank(&cands[a], &cands[b]));

    let mut per_cat: BTreeMap<&str, usize> = BTreeMap::new();
    for &k in &chosen {
        *per_cat.entry(cands[k].category.as_str()).or_default() += 1;
    }
    let frames = chosen.iter().map(|&k| labeled.frames[k].clone()).collect();
    let ds = Dataset::new(dataset_id.clone(), frames, ids);
    let rel = format!("selection/{dataset_id}.extxyz");
    let path = ctx.ws.path(&rel);
    extxyz::write_labeled(&path, &ds.frames).map_err(|e| WorkflowError::io(&path, e))?;
    ctx.emit(Payload::Dataset(dataset_record(&ds, &rel, "active")))?;
    let top = chosen.first().map_or(0.0, |&k| cands[k].error);
    let cut = chosen.last().map_or(0.0, |&k| cands[k].error);
    Ok(format!(
        "{dataset_id}: selected {} of {n} frames ({}), max force error {top:.4} down to {cut:.4} eV/A; by category {per_cat:?}",
        chosen.len(),
        match ratio {
            Ratio::All => "all".to_string(),
            Ratio::Fraction(r) => format!("ratio {r}"),
        }
    ))
}
