//! Deterministic curriculum policy.
//!
//! Reference runs, initial oracle sampling and a first fit open the run.
//! Each curriculum stage then repeats sample, select and train for at
//! least `min_rounds`, until the last sampling had no early stops and the
//! force MAE stopped improving (or `max_rounds` is reached), and evaluates
//! the stage's validation structures. A pass advances the stage; two
//! failed evaluations in a row trigger a prune with rollback, after which
//! the next fit starts from scratch on the cleaned data.

use std::collections::BTreeMap;

use crate::actions::{
    ActionKind, Directive, EvaluateParams, PruneParams, Ratio, SampleParams, SelectParams, TrainParams, TrainStart,
};
use crate::config::Config;

use super::summary::StateSummary;
use super::Decision;

fn decide(d: Directive, why: impl Into<String>) -> Decision {
    Decision::new(d, why)
}

fn validation_ids(s: &StateSummary, config: &Config, stage: Option<usize>) -> Vec<String> {
    let cats: Vec<_> = match stage.and_then(|k| config.policy.stages.get(k)) {
        Some(st) => st.categories.clone(),
        None => s.structures.iter().map(|i| i.category).collect(),
    };
    s.structures.iter().filter(|i| i.is_validation && cats.contains(&i.category)).map(|i| i.id.clone()).collect()
}

/// The scripted decision for a summary. Total and pure.
pub fn scripted_decision(s: &StateSummary, config: &Config) -> Decision {
    let pol = &config.policy;
    if s.step + 1 >= pol.budget {
        return decide(Directive::end(false, "step budget"), format!("step budget of {} decisions exhausted", pol.budget));
    }
    if s.consecutive_failures >= 2 {
        let what = s.last_action.as_ref().map_or("action", |h| h.action.as_str());
        return decide(Directive::end(false, format!("{what} failed twice in a row")), "repeated failures");
    }
    if !s.reference_done {
        return decide(Directive::ReferenceCalc(Default::default()), "run the oracle on the validation structures first");
    }
    if !s.oracle_sample_done {
        return decide(Directive::OracleSample(Default::default()), "sample every training structure with the oracle");
    }
    if !s.has_active_data() {
        return decide(Directive::end(false, "no training data"), "every dataset is empty");
    }
    let Some(current) = s.current_model.clone() else {
        return decide(
            Directive::Train(TrainParams {
                start: Some(TrainStart::FromScratch),
                mode: Some(pol.first_train_mode),
                datasets: Vec::new(),
            }),
            "fit a first model to the initial dataset",
        );
    };

    if !pol.loop_enabled {
        if s.evaluations.is_empty() {
            return decide(
                Directive::Evaluate(EvaluateParams { structures: validation_ids(s, config, None), model: Some(current) }),
                "active learning is disabled; evaluate the single model",
            );
        }
        let all = s.evaluations.iter().all(|e| e.pass);
        return decide(Directive::end(all, "single training pass"), "evaluated once with the loop disabled");
    }
    let Some(stage) = pol.stages.get(s.stage) else {
        return decide(Directive::end(true, "all curriculum stages passed"), "every stage passed its evaluation");
    };

    let sample = || {
        decide(
            Directive::Sample(SampleParams {
                categories: stage.categories.clone(),
                calculator: Some(current.clone()),
                temperatures: config.sampling.temperatures.clone(),
                ensemble: Some(config.sampling.ensemble),
            }),
            format!("explore stage `{}` with {current}", stage.name),
        )
    };
    let last = s.last_ok_action.as_deref().and_then(ActionKind::parse);
    match last {
        Some(ActionKind::Sample) => {
            let Some(dig) = s.sampling.as_ref() else { return sample() };
            let base = pol.select_ratio;
            let mut category_ratios: BTreeMap<String, f64> = pol.category_ratios.clone();
            for c in dig.early_stops_by_category.keys() {
                category_ratios.insert(c.clone(), (base * pol.boost).min(1.0));
            }
            let why = if dig.early_stops_by_category.is_empty() {
                "select the highest-error frames".to_string()
            } else {
                format!("select, boosting categories with early stops: {:?}", dig.early_stops_by_category)
            };
            decide(
                Directive::Select(SelectParams {
                    trajectories: dig.trajectories.clone(),
                    ratio: Some(Ratio::Fraction(base)),
                    category_ratios,
                }),
                why,
            )
        }
        Some(ActionKind::Select) => decide(
            Directive::Train(TrainParams {
                start: Some(TrainStart::FineTune(current.clone())),
                mode: Some(pol.loop_train_mode),
                datasets: Vec::new(),
            }),
            "fine-tune on the enlarged dataset",
        ),
        Some(ActionKind::Prune) if s.models.iter().max_by_key(|m| m.step).is_some_and(|m| m.status == "rolled_back") => {
            decide(
                Directive::Train(TrainParams {
                    start: Some(TrainStart::FromScratch),
                    mode: Some(pol.loop_train_mode),
                    datasets: Vec::new(),
                }),
                "rolled back; refit from scratch on the pruned data",
            )
        }
        Some(ActionKind::Evaluate) if s.stage_failures >= 2 => decide(
            Directive::Prune(PruneParams { models: Vec::new(), datasets: Vec::new(), rollback: s.registered_models() >= 2 }),
            "two failed evaluations in a row; drop outliers and roll back",
        ),
        _ => {
            let rounds = s.rounds_since_evaluation;
            let calm = s.sampled_since_evaluation
                && s.sampling.as_ref().is_some_and(|d| d.early_stops_by_reason.is_empty());
            let flat = s.mae_improvement().is_none_or(|x| x < pol.mae_tolerance);
            let ready = rounds >= pol.min_rounds.max(1) && ((calm && flat) || rounds >= pol.max_rounds);
            if last == Some(ActionKind::Train) && ready {
                decide(
                    Directive::Evaluate(EvaluateParams {
                        structures: validation_ids(s, config, Some(s.stage)),
                        model: Some(current.clone()),
                    }),
                    format!("stage `{}` is stable after {rounds} rounds; evaluate", stage.name),
                )
            } else {
                sample()
            }
        }
    }
}
