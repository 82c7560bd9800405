//! Initial oracle sampling and model-driven exploration.

use std::collections::{BTreeMap, BTreeSet};

use alloop_core::calc::PairCalculator;
use alloop_core::extxyz;
use alloop_core::md::{run_md, Ensemble};
use alloop_core::oracle::label_frames;
use alloop_core::parallel;
use alloop_core::report::Payload;
use alloop_core::AtomicConfiguration;
use rand_distr::{Distribution, Normal};

use super::{dataset_record, Ctx, OracleSampleParams, SampleParams};
use crate::error::WorkflowError;
use crate::workspace::StructureInfo;

pub const INIT_DATASET: &str = "init";

struct Job<'a> {
    id: String,
    info: &'a StructureInfo,
    config: &'a AtomicConfiguration,
    ensemble: Ensemble,
    temperature: f64,
}

fn kelvin(t: f64) -> String {
    format!("{t:.0}K")
}

pub(super) fn oracle_sample(ctx: &mut Ctx<'_>, p: &OracleSampleParams) -> Result<String, WorkflowError> {
    if ctx.state.markers.oracle_sample_done {
        return Err(WorkflowError::Precondition("oracle_sample runs once per workspace and already ran".into()));
    }
    let config = ctx.config().clone();
    let s = &config.oracle_sample;
    let structures = ctx.ws.structures()?;
    let restrict = p.structures.as_ref().or(s.structures.as_ref());
    if let Some(ids) = restrict {
        for id in ids {
            match structures.iter().find(|(i, _)| &i.id == id) {
                None => return Err(WorkflowError::Precondition(format!("unknown structure `{id}`"))),
                Some((i, _)) if i.is_validation => {
                    return Err(WorkflowError::Precondition(format!("`{id}` is held out for validation")))
                }
                _ => {}
            }
        }
    }
    let targets: Vec<_> = structures
        .iter()
        .filter(|(i, _)| !i.is_validation && restrict.is_none_or(|ids| ids.contains(&i.id)))
        .collect();
    if targets.is_empty() {
        return Err(WorkflowError::Precondition("no training structures to sample".into()));
    }
    let species = ctx.ws.species()?;
    let masses = ctx.ws.masses(&species)?;
    let oracle = config.oracle.resolve(species.iter().map(String::as_str))?;

    let jobs: Vec<Job> = targets
        .iter()
        .flat_map(|(info, c)| {
            s.ladder.iter().map(move |r| Job {
                id: format!("init_{}_{}_{}", info.id, r.ensemble.as_str(), kelvin(r.temperature)),
                info,
                config: c,
                ensemble: r.ensemble,
                temperature: r.temperature,
            })
        })
        .collect();
    let runs = parallel::map(&jobs, |j| {
        let proto = config.md.protocol(j.ensemble, j.temperature, &s.run, ctx_seed(config.seed, &j.id));
        run_md(&j.id, j.config, &oracle, &masses, &proto, &config.thresholds, None)
    });

    let mut frames: BTreeMap<&str, Vec<AtomicConfiguration>> = BTreeMap::new();
    let mut origin = Vec::new();
    let mut early = 0;
    for (j, r) in jobs.iter().zip(runs) {
        let t = r?;
        early += usize::from(!t.is_completed());
        let rec = ctx.store_trajectory("trajectories", &t, j.info)?;
        ctx.emit(Payload::Trajectory(rec))?;
        origin.push(t.trajectory_id.clone());
        frames.entry(j.info.id.as_str()).or_default().extend(t.frames.into_iter().map(|f| f.config));
    }

    let mut configs = Vec::new();
    let (mut n_md, mut n_scan, mut n_rattle) = (0, 0, 0);
    for (info, c) in &targets {
        let md = frames.remove(info.id.as_str()).unwrap_or_default();
        n_md += md.len();
        configs.extend(md);
        for scale in s.compression.scales() {
            let mut x = (*c).clone();
            if (scale - 1.0).abs() > 1e-12 {
                x.scale(scale);
            }
            x.info.insert("source".into(), format!("compression {scale:.4}"));
            configs.push(x);
            n_scan += 1;
        }
        let rattled = rattle(c, s.rattle.sigma, s.rattle.count, ctx_seed(config.seed, &format!("rattle/{}", info.id)))?;
        n_rattle += rattled.len();
        configs.extend(rattled);
        origin.push(format!("{}/compression", info.id));
        origin.push(format!("{}/rattle", info.id));
    }
    let ds = label_frames(INIT_DATASET, &configs, &config.oracle, origin)?;
    let rel = format!("selection/{INIT_DATASET}.extxyz");
    let path = ctx.ws.path(&rel);
    extxyz::write_labeled(&path, &ds.frames).map_err(|e| WorkflowError::io(&path, e))?;
    ctx.emit(Payload::Dataset(dataset_record(&ds, &rel, "active")))?;
    ctx.state.markers.oracle_sample_done = true;
    Ok(format!(
        "dataset {INIT_DATASET}: {} frames from {} structures ({n_md} MD, {n_scan} compression, {n_rattle} rattle); {} runs, {early} early stops",
        ds.len(),
        targets.len(),
        jobs.len()
    ))
}

fn ctx_seed(master: u64, job: &str) -> u64 {
    alloop_core::seed::derive_seed(master, job)
}

/// `count` copies of `c` with Gaussian displacements of width `sigma` (Å)
/// on every Cartesian component.
pub fn rattle(c: &AtomicConfiguration, sigma: f64, count: usize, seed: u64) -> Result<Vec<AtomicConfiguration>, WorkflowError> {
    let normal = Normal::new(0.0, sigma).map_err(|e| WorkflowError::Config(format!("rattle sigma: {e}")))?;
    let mut rng = alloop_core::seed::SeedPolicy::new(seed).rng("rattle");
    Ok((0..count)
        .map(|k| {
            let mut x = c.clone();
            for p in x.positions.iter_mut() {
                for d in 0..3 {
                    p[d] += normal.sample(&mut rng);
                }
            }
            x.velocities = None;
            x.info.insert("source".into(), format!("rattle {k}"));
            x
        })
        .collect())
}

pub(super) fn sample(ctx: &mut Ctx<'_>, p: &SampleParams) -> Result<String, WorkflowError> {
    let config = ctx.config().clone();
    let calc_name = p
        .calculator
        .clone()
        .or_else(|| ctx.current_model_id())
        .ok_or_else(|| WorkflowError::Precondition("no model registered to sample with".into()))?;
    let species = ctx.ws.species()?;
    let masses = ctx.ws.masses(&species)?;
    let calc: Box<dyn PairCalculator> = if calc_name == "oracle" {
        Box::new(config.oracle.resolve(species.iter().map(String::as_str))?)
    } else {
        Box::new(ctx.load_model(&calc_name)?.calculator())
    };
    let categories = if p.categories.is_empty() { ctx.stage_categories() } else { p.categories.clone() };
    let structures = ctx.ws.structures()?;
    let targets: Vec<_> =
        structures.iter().filter(|(i, _)| !i.is_validation && categories.contains(&i.category)).collect();
    if targets.is_empty() {
        let names: Vec<&str> = categories.iter().map(|c| c.as_str()).collect();
        return Err(WorkflowError::Precondition(format!("no training structures in categories [{}]", names.join(", "))));
    }
    let temps = if p.temperatures.is_empty() { config.sampling.temperatures.clone() } else { p.temperatures.clone() };
    if temps.is_empty() || temps.iter().any(|t| !(*t > 0.0)) {
        return Err(WorkflowError::Directive("sampling temperatures must be positive".into()));
    }
    let ensemble = p.ensemble.unwrap_or(config.sampling.ensemble);
    let step = ctx.step;
    let jobs: Vec<Job> = targets
        .iter()
        .flat_map(|(info, c)| {
            temps.iter().map(move |&t| Job {
                id: format!("s{step:03}_{}_{}", info.id, kelvin(t)),
                info,
                config: c,
                ensemble,
                temperature: t,
            })
        })
        .collect();
    let calc_ref: &dyn PairCalculator = calc.as_ref();
    let runs = parallel::map(&jobs, |j| {
        let proto = config.md.protocol(j.ensemble, j.temperature, &config.sampling.run, ctx_seed(config.seed, &j.id));
        run_md(&j.id, j.config, calc_ref, &masses, &proto, &config.thresholds, None)
    });
    let mut by_reason: BTreeMap<String, usize> = BTreeMap::new();
    let mut by_category: BTreeMap<String, usize> = BTreeMap::new();
    let mut completed = 0;
    let mut frames = 0;
    for (j, r) in jobs.iter().zip(runs) {
        let t = r?;
        frames += t.frames.len();
        match t.stop_reason() {
            None => completed += 1,
            Some(reason) => {
                *by_reason.entry(reason.as_str().into()).or_default() += 1;
                *by_category.entry(j.info.category.as_str().into()).or_default() += 1;
            }
        }
        let rec = ctx.store_trajectory("trajectories", &t, j.info)?;
        ctx.emit(Payload::Trajectory(rec))?;
    }
    let cats: BTreeSet<&str> = categories.iter().map(|c| c.as_str()).collect();
    Ok(format!(
        "{} jobs with {calc_name} over [{}]: {completed} completed, {frames} frames; early stops by reason {:?}, by category {:?}",
        jobs.len(),
        cats.into_iter().collect::<Vec<_>>().join(", "),
        by_reason,
        by_category
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloop_core::geometry::Cell;
    use alloop_core::Vec3;

    #[test]
    fn rattle_is_seeded_and_centered() {
        let c = AtomicConfiguration::new(Cell::cubic(10.0), vec!["Ar".into(); 200], vec![Vec3::zeros(); 200]);
        let a = rattle(&c, 0.05, 3, 7).unwrap();
        assert_eq!(a, rattle(&c, 0.05, 3, 7).unwrap());
        assert_ne!(a, rattle(&c, 0.05, 3, 8).unwrap());
        let comps: Vec<f64> = a.iter().flat_map(|x| x.positions.iter().flat_map(|p| [p.x, p.y, p.z])).collect();
        let n = comps.len() as f64;
        let mean = comps.iter().sum::<f64>() / n;
        let sd = (comps.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        assert!(mean.abs() < 0.01, "{mean}");
        assert!((sd - 0.05).abs() < 0.005, "{sd}");
    }
}
