//! Active-learning orchestrator: workspace lifecycle, action executors,
//! decision policies and the loop that ties them together.

pub mod actions;
pub mod cli;
pub mod config;
pub mod error;
pub mod fsutil;
pub mod orchestrator;
pub mod policy;
pub mod prepare;
pub mod state;
pub mod task;
pub mod workspace;

pub use config::Config;
pub use error::WorkflowError;
pub use orchestrator::{resume, run, Limits, LoopExit};
pub use task::TaskSpec;
pub use workspace::Workspace;
