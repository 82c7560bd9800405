//! Command-line interface.
//!
//! Exit codes: 0 success, 1 usage, 2 runtime error, 3 the workflow ended
//! unsuccessfully.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Parser, Subcommand, ValueEnum};

use crate::actions::{render_text, FinalReport};
use crate::config::LlmSettings;
use crate::error::WorkflowError;
use crate::orchestrator::{self, Limits, LoopExit};
use crate::policy::{assemble_state, HttpTransport, LlmPolicy, Policy, Scripted};
use crate::prepare::{prepare_from_spec, prepare_interactive};
use crate::task::TaskSpec;
use crate::workspace::{Workspace, FINAL_REPORT_FILE};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;
pub const EXIT_FAILED_RUN: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "alloop", version, about = "Active-learning loop for a linear interatomic potential")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum PolicyName {
    Scripted,
    Llm,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Create a workspace from a task spec or an interview.
    Prepare {
        #[arg(long)]
        workspace: PathBuf,
        #[arg(long, conflicts_with = "interactive", required_unless_present = "interactive")]
        spec: Option<PathBuf>,
        #[arg(long)]
        interactive: bool,
        /// JSON file with chat endpoint settings, for --interactive.
        #[arg(long)]
        llm_config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run the loop on a prepared workspace.
    Run {
        #[arg(long)]
        workspace: PathBuf,
        #[arg(long, value_enum, default_value = "scripted")]
        policy: PolicyName,
        #[arg(long)]
        max_steps: Option<u64>,
        #[arg(long)]
        max_minutes: Option<f64>,
    },
    /// Continue an interrupted run.
    Resume {
        #[arg(long)]
        workspace: PathBuf,
        #[arg(long, value_enum, default_value = "scripted")]
        policy: PolicyName,
        #[arg(long)]
        max_steps: Option<u64>,
        #[arg(long)]
        max_minutes: Option<f64>,
    },
    /// Print step, stage, the current model and the latest evaluation.
    Status {
        #[arg(long)]
        workspace: PathBuf,
    },
    /// Print the final report.
    Report {
        #[arg(long)]
        workspace: PathBuf,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
    },
}

/// Parses `args` (program name first) and runs the command.
pub fn run_cli<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{text}");
                    EXIT_OK
                }
                _ => {
                    let _ = write!(err, "{text}");
                    EXIT_USAGE
                }
            };
        }
    };
    match dispatch(cli.command, out) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_RUNTIME
        }
    }
}

fn limits(max_steps: Option<u64>, max_minutes: Option<f64>) -> Limits {
    Limits {
        max_steps,
        wall_clock: max_minutes.map(|m| Duration::from_secs_f64(m.max(0.0) * 60.0)),
        halt_before: None,
    }
}

fn policy_for(name: PolicyName, root: &Path) -> Result<Box<dyn Policy>, WorkflowError> {
    Ok(match name {
        PolicyName::Scripted => Box::new(Scripted),
        PolicyName::Llm => {
            let ws = Workspace::open(root)?;
            Box::new(LlmPolicy::new(HttpTransport::from_settings(&ws.config.llm)?, ws.config.llm.clone()))
        }
    })
}

fn finish(exit: LoopExit, out: &mut dyn Write) -> i32 {
    match exit {
        LoopExit::Ended(r) => {
            let _ = write!(out, "{}", render_text(&r));
            if r.success {
                EXIT_OK
            } else {
                EXIT_FAILED_RUN
            }
        }
        LoopExit::Halted { step } => {
            let _ = writeln!(out, "halted before step {step}");
            EXIT_OK
        }
    }
}

fn dispatch(cmd: Command, out: &mut dyn Write) -> Result<i32, WorkflowError> {
    match cmd {
        Command::Prepare { workspace, spec, interactive, llm_config, seed } => {
            let ws = if interactive {
                let settings: LlmSettings = match llm_config {
                    Some(p) => crate::fsutil::read_json(&p)?,
                    None => {
                        return Err(WorkflowError::Config(
                            "interactive preparation needs --llm-config with an endpoint and model; or use --spec".into(),
                        ))
                    }
                };
                let mut transport = HttpTransport::from_settings(&settings)?;
                let stdin = std::io::stdin();
                let mut input = stdin.lock();
                prepare_interactive(&workspace, &mut transport, &mut input, out, seed, 30)?
            } else {
                let spec = TaskSpec::load(spec.as_deref().expect("clap requires --spec"))?;
                prepare_from_spec(&workspace, &spec, seed)?
            };
            let n = ws.structure_infos()?.len();
            let _ = writeln!(out, "prepared {} with {n} structures", ws.root.display());
            Ok(EXIT_OK)
        }
        Command::Run { workspace, policy, max_steps, max_minutes } => {
            let mut p = policy_for(policy, &workspace)?;
            Ok(finish(orchestrator::run(&workspace, p.as_mut(), limits(max_steps, max_minutes))?, out))
        }
        Command::Resume { workspace, policy, max_steps, max_minutes } => {
            let mut p = policy_for(policy, &workspace)?;
            Ok(finish(orchestrator::resume(&workspace, p.as_mut(), limits(max_steps, max_minutes))?, out))
        }
        Command::Status { workspace } => {
            let ws = Workspace::open(&workspace)?;
            let state = ws.load_state()?;
            let s = assemble_state(&ws)?;
            let _ = writeln!(out, "step: {}", state.step);
            let _ = writeln!(out, "phase: {:?}", state.phase);
            let _ = writeln!(out, "stage: {} ({})", s.stage, s.stage_name.as_deref().unwrap_or("complete"));
            match s.current_model.as_deref().and_then(|m| s.model(m)) {
                Some(m) => {
                    let _ = writeln!(
                        out,
                        "current model: {} (force MAE {:.5} eV/A, energy MAE {:.6} eV/atom, {} frames)",
                        m.model_id, m.force_mae, m.energy_mae, m.frames
                    );
                }
                None => {
                    let _ = writeln!(out, "current model: none");
                }
            }
            if s.evaluations.is_empty() {
                let _ = writeln!(out, "latest evaluation: none");
            }
            for e in &s.evaluations {
                let _ = writeln!(
                    out,
                    "latest evaluation: {} with {}: density deviation {}, {}",
                    e.structure_id,
                    e.model_id,
                    e.density_deviation_pct.map_or("n/a".into(), |d| format!("{d:.2}%")),
                    if e.pass { "pass" } else { "fail" }
                );
            }
            Ok(EXIT_OK)
        }
        Command::Report { workspace, format } => {
            let p = workspace.join(FINAL_REPORT_FILE);
            if !p.is_file() {
                return Err(WorkflowError::Workspace(format!("{}: no final report yet", workspace.display())));
            }
            let r = FinalReport::load(&p)?;
            match format {
                Format::Text => {
                    let _ = write!(out, "{}", render_text(&r));
                }
                Format::Json => {
                    let _ = writeln!(out, "{}", serde_json::to_string_pretty(&r).unwrap_or_default());
                }
            }
            Ok(EXIT_OK)
        }
    }
}
