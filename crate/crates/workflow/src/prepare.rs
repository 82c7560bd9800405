//! Workspace preparation from a spec file or an interactive interview.

use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::path::Path;

use alloop_core::elements::mass_table;
use alloop_core::structgen::{generate_initial_set, write_initial_set};
use serde_json::Value;

use crate::error::WorkflowError;
use crate::fsutil;
use crate::policy::{first_json_object, ChatMessage, ChatTransport};
use crate::state::{Phase, WorkflowState};
use crate::task::{TaskSpec, REQUIRED_FIELDS};
use crate::workspace::{Workspace, DIALOGUE_FILE, SUMMARY_FILE};

/// Builds the structure set and an empty state at step 0.
pub fn prepare_from_spec(root: &Path, spec: &TaskSpec, seed: u64) -> Result<Workspace, WorkflowError> {
    let config = spec.config(seed)?;
    let species = spec.species();
    let masses = mass_table(species.iter().map(String::as_str), &config.masses)
        .map_err(|s| WorkflowError::Task(format!("no mass for species `{s}`; add it under `masses`")))?;
    let set = generate_initial_set(&spec.categories, &masses, spec.min_separation, config.seeds().child_seed("structures"))?;
    let ws = Workspace::create(root, &config)?;
    let dir = ws.path("init_structures");
    write_initial_set(&dir, &set).map_err(|e| WorkflowError::io(&dir, e))?;
    fsutil::write_atomic(&ws.path(SUMMARY_FILE), spec_summary(spec).as_bytes())?;
    let mut state = WorkflowState::new(root, seed);
    state.phase = Phase::Autonomous;
    ws.save_state(&state)?;
    Ok(ws)
}

pub fn spec_summary(spec: &TaskSpec) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "System: {}", spec.system);
    let _ = writeln!(s, "Temperature range: {} to {} K", spec.temperature_range[0], spec.temperature_range[1]);
    let ens: Vec<&str> = spec.ensembles.iter().map(|e| e.as_str()).collect();
    let _ = writeln!(s, "Ensembles: {}", ens.join(", "));
    let _ = writeln!(s, "Structure plans:");
    for p in &spec.categories {
        let _ = writeln!(s, "  {} ({}), {} variants", p.name, p.category.as_str(), p.variants);
    }
    let pairs: Vec<String> = spec.targets.rdf_pairs.iter().map(|[a, b]| format!("{a}-{b}")).collect();
    let _ = writeln!(
        s,
        "Targets: density {}, RDF pairs [{}], diffusion [{}]",
        if spec.targets.density { "yes" } else { "no" },
        pairs.join(", "),
        spec.targets.diffusion_species.join(", ")
    );
    let _ = writeln!(s, "Reference: {}", spec.oracle.identity());
    let _ = writeln!(s, "\nSpecification:\n{}", serde_json::to_string_pretty(spec).unwrap_or_default());
    s
}

const INTERVIEW: &str = "You collect the information needed to set up a machine-learned potential training task. \
Ask the user one short question at a time. When every field is known, reply with only a JSON object holding the full \
task specification and \"complete\": true. Mandatory fields: ";

/// Interviews the user through `transport` until it returns a complete
/// spec, then prepares the workspace. Questions go to `output`, answers
/// come from `input`.
pub fn prepare_interactive<T: ChatTransport>(
    root: &Path,
    transport: &mut T,
    input: &mut dyn BufRead,
    output: &mut dyn Write,
    seed: u64,
    max_rounds: usize,
) -> Result<Workspace, WorkflowError> {
    let mut messages = vec![
        ChatMessage::new("system", format!("{INTERVIEW}{}.", REQUIRED_FIELDS.join(", "))),
        ChatMessage::new("user", "Information collection started."),
    ];
    let mut log = String::from("== Information collection started ==\n");
    let mut rounds = 0;
    let spec = loop {
        if rounds >= max_rounds {
            return Err(WorkflowError::Llm(format!("no complete specification after {max_rounds} rounds")));
        }
        rounds += 1;
        let reply = transport.complete(&messages).map_err(WorkflowError::Llm)?;
        messages.push(ChatMessage::new("assistant", reply.clone()));
        let complete = first_json_object(&reply).filter(|o| o.get("complete") == Some(&Value::Bool(true)));
        if let Some(obj) = complete {
            match TaskSpec::from_value(Value::Object(obj)) {
                Ok(spec) => break spec,
                Err(e) => {
                    let _ = writeln!(log, "-- specification rejected: {e}");
                    messages.push(ChatMessage::new("user", format!("That specification is not usable: {e}. Ask for what is missing.")));
                    continue;
                }
            }
        }
        let q = reply.trim();
        write!(output, "{q}\n> ").and_then(|_| output.flush()).map_err(|e| WorkflowError::io(Path::new("<stdout>"), e))?;
        let mut answer = String::new();
        let n = input.read_line(&mut answer).map_err(|e| WorkflowError::io(Path::new("<stdin>"), e))?;
        if n == 0 {
            return Err(WorkflowError::Task("input closed before the specification was complete".into()));
        }
        let a = answer.trim();
        let _ = writeln!(log, "Q: {q}\nA: {a}");
        messages.push(ChatMessage::new("user", a));
    };
    let _ = writeln!(log, "== Information collection complete ==\n{}", spec_summary(&spec));
    let ws = prepare_from_spec(root, &spec, seed)?;
    fsutil::write_atomic(&ws.path(DIALOGUE_FILE), log.as_bytes())?;
    Ok(ws)
}
