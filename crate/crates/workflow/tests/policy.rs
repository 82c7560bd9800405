mod common;

use std::collections::BTreeMap;

use alloop::actions::*;
use alloop::policy::{parse_decision, scripted_decision, Decision, StateSummary};
use alloop::workspace::StructureInfo;
use alloop_core::md::Ensemble;
use alloop_core::potential::TrainMode;
use alloop_core::structgen::Category;
use common::*;
use proptest::prelude::*;

fn ids() -> impl Strategy<Value = Vec<String>> {
    prop::collection::vec("[a-z][a-z0-9_]{0,8}", 0..4)
}

fn category() -> impl Strategy<Value = Category> {
    prop::sample::select(vec![
        Category::Solid,
        Category::Amorphous,
        Category::MoleculeLiquid,
        Category::SolidSurface,
        Category::Cluster,
        Category::SolidSolid,
        Category::SolidLiquid,
        Category::LiquidLiquid,
        Category::Multilayer,
    ])
}

fn directive() -> impl Strategy<Value = Directive> {
    prop_oneof![
        Just(Directive::ReferenceCalc(ReferenceParams {})),
        prop::option::of(ids()).prop_map(|structures| Directive::OracleSample(OracleSampleParams { structures })),
        (prop::collection::vec(category(), 0..3), prop::option::of("[a-z_0-9]{1,8}"), prop::collection::vec(100.0f64..2000.0, 0..3), prop::option::of(prop_oneof![Just(Ensemble::Npt), Just(Ensemble::Nvt), Just(Ensemble::Nve)]))
            .prop_map(|(categories, calculator, temperatures, ensemble)| Directive::Sample(SampleParams { categories, calculator, temperatures, ensemble })),
        (ids(), prop::option::of(prop_oneof![Just(Ratio::All), (0.01f64..1.0).prop_map(Ratio::Fraction)]), prop::collection::btree_map("[a-z_]{1,8}", 0.0f64..1.0, 0..3))
            .prop_map(|(trajectories, ratio, category_ratios)| Directive::Select(SelectParams { trajectories, ratio, category_ratios })),
        (prop::option::of(prop_oneof![Just(TrainStart::FromScratch), "[a-z_0-9]{1,8}".prop_map(TrainStart::FineTune)]), prop::option::of(prop_oneof![Just(TrainMode::Quick), Just(TrainMode::Accurate)]), ids())
            .prop_map(|(start, mode, datasets)| Directive::Train(TrainParams { start, mode, datasets })),
        (ids(), prop::option::of("[a-z_0-9]{1,8}")).prop_map(|(structures, model)| Directive::Evaluate(EvaluateParams { structures, model })),
        (ids(), ids(), any::<bool>()).prop_map(|(models, datasets, rollback)| Directive::Prune(PruneParams { models, datasets, rollback })),
        (any::<bool>(), prop::option::of("[ -~]{0,20}")).prop_map(|(success, reason)| Directive::End(EndParams { success, reason })),
    ]
}

proptest! {
    #[test]
    fn decisions_round_trip_through_text(d in directive(), why in "[ -~]{0,30}", fence in any::<bool>()) {
        let decision = Decision::new(d, why);
        let json = serde_json::to_string(&decision).unwrap();
        let text = if fence { format!("Here you go:\n```json\n{json}\n```\n") } else { json };
        prop_assert_eq!(parse_decision(&text).unwrap(), decision);
    }

    #[test]
    fn selection_equals_sorted_prefix(errors in prop::collection::vec(0u32..20, 1..400), ratio in 0.001f64..1.0) {
        let cands: Vec<Candidate> = errors.iter().enumerate().map(|(i, e)| Candidate {
            trajectory_id: format!("t{}", i % 3),
            frame_index: i,
            category: "solid".into(),
            error: *e as f64 / 10.0,
        }).collect();
        let k = selection_count(cands.len(), ratio);
        prop_assert!(k as f64 >= ratio * cands.len() as f64 - 1e-6 && k <= cands.len());
        let mut brute: Vec<usize> = (0..cands.len()).collect();
        brute.sort_by(|&a, &b| {
            let (x, y) = (&cands[a], &cands[b]);
            y.error.partial_cmp(&x.error).unwrap()
                .then_with(|| x.trajectory_id.cmp(&y.trajectory_id))
                .then_with(|| x.frame_index.cmp(&y.frame_index))
        });
        brute.truncate(k);
        prop_assert_eq!(rank_top(&cands, k), brute);
    }
}

fn fresh(structures: Vec<StructureInfo>) -> StateSummary {
    StateSummary {
        step: 0,
        stage: 0,
        stage_name: None,
        stage_failures: 0,
        reference_done: false,
        oracle_sample_done: false,
        structures,
        datasets: vec![],
        models: vec![],
        current_model: None,
        evaluations: vec![],
        sampling: None,
        rounds_since_evaluation: 0,
        sampled_since_evaluation: false,
        consecutive_failures: 0,
        last_action: None,
        last_ok_action: None,
        history: vec![],
    }
}

#[test]
fn scripted_opening_follows_the_curriculum() {
    let config = tiny_spec().config(SEED).unwrap();
    let infos = vec![
        StructureInfo { id: "s0".into(), category: Category::Solid, is_validation: true },
        StructureInfo { id: "i0".into(), category: Category::SolidLiquid, is_validation: true },
        StructureInfo { id: "s1".into(), category: Category::Solid, is_validation: false },
    ];
    let mut s = fresh(infos);
    assert_eq!(scripted_decision(&s, &config).next_task, ActionKind::ReferenceCalc);
    s.reference_done = true;
    assert_eq!(scripted_decision(&s, &config).next_task, ActionKind::OracleSample);
    s.oracle_sample_done = true;
    let d = scripted_decision(&s, &config);
    assert!(matches!(d.directive, Directive::End(ref e) if !e.success), "no data must end: {d:?}");
}

#[test]
fn budget_and_failures_end_the_run() {
    let config = tiny_spec().config(SEED).unwrap();
    let mut s = fresh(vec![]);
    s.step = config.policy.budget - 1;
    assert!(matches!(scripted_decision(&s, &config).directive, Directive::End(ref e) if !e.success));
    let mut s = fresh(vec![]);
    s.consecutive_failures = 2;
    assert!(matches!(scripted_decision(&s, &config).directive, Directive::End(ref e) if !e.success));
}

fn trained(fresh_summary: StateSummary) -> StateSummary {
    let mut s = fresh_summary;
    s.reference_done = true;
    s.oracle_sample_done = true;
    s.datasets = vec![alloop::policy::DatasetDigest {
        dataset_id: "init".into(),
        frames: 10,
        energy_per_atom_min: -1.0,
        energy_per_atom_max: -0.5,
        status: "active".into(),
    }];
    s
}

fn model(id: &str, step: u64, status: &str) -> alloop::policy::ModelDigest {
    alloop::policy::ModelDigest {
        model_id: id.into(),
        parent_id: None,
        step,
        force_mae: 0.01,
        energy_mae: 0.001,
        frames: 10,
        status: status.into(),
    }
}

#[test]
fn rollback_refits_from_scratch() {
    let config = tiny_spec().config(SEED).unwrap();
    let mut s = trained(fresh(vec![]));
    s.models = vec![model("model_002", 2, "registered"), model("model_005", 5, "rolled_back")];
    s.current_model = Some("model_002".into());
    s.last_ok_action = Some("prune".into());
    let Directive::Train(p) = scripted_decision(&s, &config).directive else { panic!("expected train") };
    assert_eq!(p.start, Some(TrainStart::FromScratch));

    s.models = vec![model("model_002", 2, "registered")];
    assert_eq!(scripted_decision(&s, &config).next_task, ActionKind::Sample);
}

#[test]
fn early_stops_boost_their_category() {
    let config = tiny_spec().config(SEED).unwrap();
    let mut s = trained(fresh(vec![]));
    s.models = vec![model("model_002", 2, "registered")];
    s.current_model = Some("model_002".into());
    s.last_ok_action = Some("sample".into());
    let mut dig = alloop::policy::SamplingDigest { step: 3, trajectories: vec!["a".into()], jobs: 1, ..Default::default() };
    dig.early_stops_by_category = BTreeMap::from([("solid".to_string(), 1)]);
    dig.early_stops_by_reason = BTreeMap::from([("temperature_runaway".to_string(), 1)]);
    s.sampling = Some(dig);
    let Directive::Select(p) = scripted_decision(&s, &config).directive else { panic!("expected select") };
    let base = config.policy.select_ratio;
    assert_eq!(p.ratio, Some(Ratio::Fraction(base)));
    assert_eq!(p.category_ratios["solid"], (base * config.policy.boost).min(1.0));
    assert_eq!(p.trajectories, vec!["a".to_string()]);
}
