//! The decision loop: summarize, decide, execute, log, persist.
//!
//! State is persisted only at step boundaries. A crash inside a step leaves
//! report lines tagged with the unfinished step; `resume` drops them and
//! re-runs that step with the same seeds.

use std::path::Path;
use std::time::{Duration, Instant};

use alloop_core::report::{truncate_from_step, DecisionRecord, Payload};

use crate::actions::{execute, Ctx, Directive, FinalReport};
use crate::error::WorkflowError;
use crate::policy::{stage_progress, Decision, Policy, StateSummary};
use crate::state::{Phase, Registries, WorkflowState, REPORT_FILES};
use crate::workspace::{Workspace, FINAL_REPORT_FILE};

#[derive(Debug, Clone, Copy, Default)]
pub struct Limits {
    /// Decisions including the closing `end`.
    pub max_steps: Option<u64>,
    pub wall_clock: Option<Duration>,
    /// Return before executing this step, as if the process died there.
    pub halt_before: Option<u64>,
}

#[derive(Debug)]
pub enum LoopExit {
    Ended(FinalReport),
    Halted { step: u64 },
}

pub const LIMIT_LABEL: &str = "limit";

/// Starts the loop on a freshly prepared workspace.
pub fn run(root: &Path, policy: &mut dyn Policy, limits: Limits) -> Result<LoopExit, WorkflowError> {
    let mut ws = Workspace::open(root)?;
    ws.lock()?;
    let state = ws.load_state()?;
    match state.phase {
        Phase::Ended => return Err(WorkflowError::Precondition("the workflow has already ended".into())),
        _ if state.step > 0 => {
            return Err(WorkflowError::Precondition(format!("workflow is at step {}; use `resume`", state.step)))
        }
        _ => {}
    }
    run_loop(&ws, state, policy, limits)
}

/// Continues from the last persisted step boundary.
pub fn resume(root: &Path, policy: &mut dyn Policy, limits: Limits) -> Result<LoopExit, WorkflowError> {
    let mut ws = Workspace::open(root)?;
    ws.lock()?;
    let state = ws.load_state()?;
    if state.phase == Phase::Ended {
        return Err(WorkflowError::Precondition("the workflow has already ended".into()));
    }
    recover(&ws, &state)?;
    run_loop(&ws, state, policy, limits)
}

/// Drops report lines from unfinished steps and checks the rest against
/// the snapshot.
pub fn recover(ws: &Workspace, state: &WorkflowState) -> Result<(), WorkflowError> {
    for f in REPORT_FILES {
        truncate_from_step(&ws.reports_dir().join(f), state.step)?;
    }
    let replayed = Registries::replay(&ws.reports_dir(), state.step)?;
    if replayed != state.registries {
        let r = &state.registries;
        return Err(WorkflowError::Consistency(format!(
            "reports hold {} datasets, {} models, {} trajectories, {} evaluations, {} decisions; snapshot holds {}, {}, {}, {}, {}",
            replayed.datasets.len(),
            replayed.models.len(),
            replayed.trajectories.len(),
            replayed.evaluations.len(),
            replayed.actions.len(),
            r.datasets.len(),
            r.models.len(),
            r.trajectories.len(),
            r.evaluations.len(),
            r.actions.len()
        )));
    }
    state.check()
}

fn run_loop(
    ws: &Workspace,
    mut state: WorkflowState,
    policy: &mut dyn Policy,
    limits: Limits,
) -> Result<LoopExit, WorkflowError> {
    let started = Instant::now();
    let structures = ws.structure_infos()?;
    state.phase = Phase::Autonomous;
    loop {
        if limits.halt_before == Some(state.step) {
            return Ok(LoopExit::Halted { step: state.step });
        }
        let summary = StateSummary::build(&state.registries, &structures, &ws.config);
        let forced = if limits.max_steps.is_some_and(|m| state.step + 1 >= m) {
            Some("step budget")
        } else if limits.wall_clock.is_some_and(|w| started.elapsed() >= w) {
            Some("wall-clock limit")
        } else {
            None
        };
        let (decision, label) = match forced {
            Some(r) => (Decision::new(Directive::end(false, r), format!("{r} reached")), LIMIT_LABEL.to_string()),
            None => policy.decide(&summary, ws)?,
        };
        let step = state.step;
        let result = execute(&mut Ctx { ws, state: &mut state, step }, &decision.directive);
        let (ok, outcome) = match result {
            Ok(o) => (true, o),
            Err(e) if e.is_fatal() => return Err(e),
            Err(e) => (false, e.to_string()),
        };
        let rec = ws.append(
            step,
            Payload::Decision(DecisionRecord {
                next_task: decision.next_task.as_str().into(),
                descriptions: decision.descriptions,
                directive: serde_json::to_value(&decision.directive).unwrap_or_default(),
                policy: label,
                ok,
                outcome,
            }),
        )?;
        state.registries.apply(&rec);
        state.step += 1;
        state.current_model = state.registries.current_model().map(|m| m.model_id.clone());
        state.stage = stage_progress(&state.registries).0;
        ws.save_state(&state)?;
        if state.phase == Phase::Ended {
            return Ok(LoopExit::Ended(FinalReport::load(&ws.path(FINAL_REPORT_FILE))?));
        }
    }
}
