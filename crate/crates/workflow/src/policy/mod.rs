//! Decision layer: the state summary, a scripted curriculum policy and a
//! chat-model policy that falls back to it.

mod llm;
mod parse;
mod scripted;
mod summary;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::json;

pub use llm::{
    append_dialogue, ChatMessage, ChatTransport, HttpTransport, LlmPolicy, MockTransport, FALLBACK_LABEL, LLM_LABEL,
};
pub use parse::{first_json_object, parse_decision, ParseError};
pub use scripted::scripted_decision;
pub use summary::{
    assemble_state, stage_progress, DatasetDigest, EvaluationDigest, HistoryItem, ModelDigest, SamplingDigest,
    StateSummary,
};

use crate::actions::{ActionKind, Directive};
use crate::error::WorkflowError;
use crate::workspace::Workspace;

#[derive(Debug, Clone, PartialEq)]
pub struct Decision {
    pub next_task: ActionKind,
    pub descriptions: String,
    pub directive: Directive,
}

impl Decision {
    pub fn new(directive: Directive, descriptions: impl Into<String>) -> Self {
        Self { next_task: directive.kind(), descriptions: descriptions.into(), directive }
    }
}

impl Serialize for Decision {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        json!({
            "next_task": self.next_task.as_str(),
            "descriptions": self.descriptions,
            "parameters": self.directive.parameters(),
        })
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Decision {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v = serde_json::Value::deserialize(d)?;
        parse_decision(&v.to_string()).map_err(serde::de::Error::custom)
    }
}

/// Produces the next decision and a label recorded with it.
pub trait Policy {
    fn decide(&mut self, summary: &StateSummary, ws: &Workspace) -> Result<(Decision, String), WorkflowError>;
}

pub const SCRIPTED_LABEL: &str = "scripted";

#[derive(Debug, Clone, Copy, Default)]
pub struct Scripted;

impl Policy for Scripted {
    fn decide(&mut self, summary: &StateSummary, ws: &Workspace) -> Result<(Decision, String), WorkflowError> {
        Ok((scripted_decision(summary, &ws.config), SCRIPTED_LABEL.into()))
    }
}
