use std::path::Path;

use alloop_core::calc::CalcError;
use alloop_core::md::MdError;
use alloop_core::oracle::OracleError;
use alloop_core::potential::{OutlierError, TrainError};
use alloop_core::report::ReportError;
use alloop_core::structgen::BuildError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum WorkflowError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("configuration: {0}")]
    Config(String),
    #[error("task spec is missing required fields: {}", .0.join(", "))]
    MissingFields(Vec<String>),
    #[error("task spec: {0}")]
    Task(String),
    #[error("workspace: {0}")]
    Workspace(String),
    #[error("workspace is locked by another process: {0}")]
    Locked(String),
    #[error("state and reports disagree: {0}")]
    Consistency(String),
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("invalid directive: {0}")]
    Directive(String),
    #[error("reference run on `{structure}` stopped early ({reason})")]
    ReferenceUnstable { structure: String, reason: String },
    #[error(transparent)]
    Report(#[from] ReportError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Calc(#[from] CalcError),
    #[error(transparent)]
    Md(#[from] MdError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Outlier(#[from] OutlierError),
    #[error(transparent)]
    Build(#[from] BuildError),
    #[error("frame file: {0}")]
    Frames(String),
    #[error("language model: {0}")]
    Llm(String),
}

impl WorkflowError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        WorkflowError::Io { path: path.display().to_string(), source }
    }

    /// Errors that leave the workspace unusable and stop the loop.
    pub fn is_fatal(&self) -> bool {
        matches!(self, WorkflowError::Consistency(_) | WorkflowError::Locked(_) | WorkflowError::Workspace(_))
    }
}
