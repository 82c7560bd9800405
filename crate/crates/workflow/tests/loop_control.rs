mod common;

use alloop::actions::{Directive, SelectParams};
use alloop::policy::{assemble_state, Decision, Policy, Scripted, StateSummary};
use alloop::state::{Phase, Registries};
use alloop::workspace::{Workspace, STATE_FILE};
use alloop::{Limits, LoopExit, WorkflowError};
use common::*;

fn ended(exit: LoopExit) -> alloop::actions::FinalReport {
    match exit {
        LoopExit::Ended(r) => r,
        other => panic!("expected an end, got {other:?}"),
    }
}

#[test]
fn tiny_run_ends_and_snapshot_matches_replay() {
    let dir = tempfile::tempdir().unwrap();
    let root = prepared(dir.path());
    let report = ended(alloop::run(&root, &mut Scripted, Limits::default()).unwrap());
    assert!(report.success, "{}", report.reason);
    let kinds: Vec<&str> = report.actions.iter().map(|a| a.action.as_str()).collect();
    assert_eq!(&kinds[..4], ["reference_calc", "oracle_sample", "train", "sample"]);
    assert_eq!(kinds.last(), Some(&"end"));

    let ws = Workspace::open(&root).unwrap();
    let state = ws.load_state().unwrap();
    assert_eq!(state.phase, Phase::Ended);
    assert_eq!(state.step as usize, report.actions.len());
    let replayed = Registries::replay(&ws.reports_dir(), u64::MAX).unwrap();
    assert_eq!(replayed, state.registries);
    let from_snapshot = StateSummary::build(&state.registries, &ws.structure_infos().unwrap(), &ws.config);
    assert_eq!(assemble_state(&ws).unwrap(), from_snapshot);
}

#[test]
fn step_limit_forces_an_unsuccessful_end() {
    let dir = tempfile::tempdir().unwrap();
    let root = prepared(dir.path());
    let report = ended(alloop::run(&root, &mut Scripted, Limits { max_steps: Some(2), ..Limits::default() }).unwrap());
    assert!(!report.success);
    assert_eq!(report.reason, "step budget");
    let kinds: Vec<&str> = report.actions.iter().map(|a| a.action.as_str()).collect();
    assert_eq!(kinds, ["reference_calc", "end"]);
}

#[test]
fn ended_workspace_refuses_run_and_resume() {
    let dir = tempfile::tempdir().unwrap();
    let root = prepared(dir.path());
    ended(alloop::run(&root, &mut Scripted, Limits { max_steps: Some(1), ..Limits::default() }).unwrap());
    for r in [
        alloop::run(&root, &mut Scripted, Limits::default()),
        alloop::resume(&root, &mut Scripted, Limits::default()),
    ] {
        assert!(matches!(r, Err(WorkflowError::Precondition(_))), "{r:?}");
    }
}

#[test]
fn run_after_progress_asks_for_resume() {
    let dir = tempfile::tempdir().unwrap();
    let root = prepared(dir.path());
    let exit = alloop::run(&root, &mut Scripted, Limits { halt_before: Some(1), ..Limits::default() }).unwrap();
    assert!(matches!(exit, LoopExit::Halted { step: 1 }));
    let r = alloop::run(&root, &mut Scripted, Limits::default());
    assert!(matches!(r, Err(WorkflowError::Precondition(m)) if m.contains("resume")));
}

#[test]
fn resume_without_snapshot_fails() {
    let dir = tempfile::tempdir().unwrap();
    let root = prepared(dir.path());
    std::fs::remove_file(root.join(STATE_FILE)).unwrap();
    assert!(alloop::resume(&root, &mut Scripted, Limits::default()).is_err());
}

#[test]
fn resume_rejects_reports_missing_snapshot_records() {
    let dir = tempfile::tempdir().unwrap();
    let root = prepared(dir.path());
    alloop::run(&root, &mut Scripted, Limits { halt_before: Some(2), ..Limits::default() }).unwrap();
    std::fs::remove_file(root.join("reports/decision.jsonl")).unwrap();
    let r = alloop::resume(&root, &mut Scripted, Limits::default());
    assert!(matches!(r, Err(WorkflowError::Consistency(_))), "{r:?}");
}

/// Issues one impossible selection, then defers to the scripted policy.
struct Saboteur {
    at: u64,
}

impl Policy for Saboteur {
    fn decide(&mut self, s: &StateSummary, ws: &Workspace) -> Result<(Decision, String), WorkflowError> {
        if s.step == self.at {
            let d = Directive::Select(SelectParams { trajectories: vec!["no_such_run".into()], ..Default::default() });
            return Ok((Decision::new(d, "broken on purpose"), "saboteur".into()));
        }
        Scripted.decide(s, ws)
    }
}

#[test]
fn failed_action_is_logged_and_the_loop_continues() {
    let dir = tempfile::tempdir().unwrap();
    let root = prepared(dir.path());
    let report = ended(alloop::run(&root, &mut Saboteur { at: 3 }, Limits::default()).unwrap());
    let bad = &report.actions[3];
    assert_eq!(bad.action, "select");
    assert!(!bad.ok);
    assert!(report.actions[4].ok);
    assert!(report.success, "{}", report.reason);
}

/// Always fails, so the scripted rule for repeated failures ends the run.
struct AlwaysBroken;

impl Policy for AlwaysBroken {
    fn decide(&mut self, s: &StateSummary, ws: &Workspace) -> Result<(Decision, String), WorkflowError> {
        if s.consecutive_failures >= 2 {
            return Scripted.decide(s, ws);
        }
        let d = Directive::Select(SelectParams { trajectories: vec!["no_such_run".into()], ..Default::default() });
        Ok((Decision::new(d, "broken"), "broken".into()))
    }
}

#[test]
fn repeated_failures_end_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let root = prepared(dir.path());
    let report = ended(alloop::run(&root, &mut AlwaysBroken, Limits::default()).unwrap());
    assert!(!report.success);
    assert_eq!(report.actions.len(), 3);
    assert!(report.reason.contains("twice"), "{}", report.reason);
}
