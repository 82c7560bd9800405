//! Chat-model policy over an HTTP chat-completion endpoint.

use std::collections::VecDeque;
use std::io::Write;
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::scripted::scripted_decision;
use super::summary::StateSummary;
use super::{parse_decision, Decision, Policy};
use crate::config::LlmSettings;
use crate::error::WorkflowError;
use crate::workspace::{Workspace, DESCRIPTION_FILE, DIALOGUE_FILE, SUMMARY_FILE};

pub const LLM_LABEL: &str = "llm";
pub const FALLBACK_LABEL: &str = "llm_fallback_scripted";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    pub fn new(role: &str, content: impl Into<String>) -> Self {
        Self { role: role.into(), content: content.into() }
    }
}

/// One request, one reply. Errors are transport failures.
pub trait ChatTransport {
    fn complete(&mut self, messages: &[ChatMessage]) -> Result<String, String>;

    /// A secret to scrub from anything logged.
    fn secret(&self) -> Option<&str> {
        None
    }
}

pub struct HttpTransport {
    agent: ureq::Agent,
    endpoint: String,
    model: String,
    key: String,
}

impl HttpTransport {
    /// Needs an endpoint, a model name and the credential variable set.
    pub fn from_settings(s: &LlmSettings) -> Result<Self, WorkflowError> {
        let endpoint = s.endpoint.clone().ok_or_else(|| WorkflowError::Config("llm.endpoint is not set".into()))?;
        let model = s.model.clone().ok_or_else(|| WorkflowError::Config("llm.model is not set".into()))?;
        let key = std::env::var(&s.api_key_env)
            .ok()
            .filter(|k| !k.is_empty())
            .ok_or_else(|| WorkflowError::Config(format!("environment variable {} is not set", s.api_key_env)))?;
        let agent = ureq::AgentBuilder::new().timeout(Duration::from_secs(s.timeout_s)).build();
        Ok(Self { agent, endpoint, model, key })
    }
}

impl ChatTransport for HttpTransport {
    fn complete(&mut self, messages: &[ChatMessage]) -> Result<String, String> {
        let resp = self
            .agent
            .post(&self.endpoint)
            .set("Authorization", &format!("Bearer {}", self.key))
            .send_json(json!({ "model": self.model, "messages": messages }))
            .map_err(|e| e.to_string())?;
        let body: Value = resp.into_json().map_err(|e| e.to_string())?;
        body.pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| format!("reply has no choices[0].message.content: {body}"))
    }

    fn secret(&self) -> Option<&str> {
        Some(&self.key)
    }
}

/// Replays canned replies; records every request.
#[derive(Debug, Default)]
pub struct MockTransport {
    pub replies: VecDeque<Result<String, String>>,
    pub requests: Vec<Vec<ChatMessage>>,
}

impl MockTransport {
    pub fn new(replies: impl IntoIterator<Item = Result<String, String>>) -> Self {
        Self { replies: replies.into_iter().collect(), requests: Vec::new() }
    }
}

impl ChatTransport for MockTransport {
    fn complete(&mut self, messages: &[ChatMessage]) -> Result<String, String> {
        self.requests.push(messages.to_vec());
        self.replies.pop_front().unwrap_or_else(|| Err("mock transport has no reply left".into()))
    }
}

pub fn append_dialogue(root: &Path, text: &str) -> Result<(), WorkflowError> {
    let p = root.join(DIALOGUE_FILE);
    let mut f = std::fs::OpenOptions::new().create(true).append(true).open(&p).map_err(|e| WorkflowError::io(&p, e))?;
    f.write_all(text.as_bytes()).map_err(|e| WorkflowError::io(&p, e))
}

fn tail(text: &str, lines: usize) -> String {
    let v: Vec<&str> = text.lines().collect();
    v[v.len().saturating_sub(lines)..].join("\n")
}

const INSTRUCTIONS: &str = r#"You steer an active-learning workflow that fits a machine-learned interatomic potential against a reference calculator.
Choose exactly one next action and reply with a single JSON object:
{"next_task": "<action>", "descriptions": "<why>", "parameters": {...}}

Actions and their optional parameters:
- reference_calc {}: reference MD on the validation structures. Only at the very beginning, once.
- oracle_sample {"structures": [ids]}: reference sampling of the training structures into the initial dataset. Once, before the first train.
- sample {"categories": [..], "calculator": "<model id>|oracle", "temperatures": [K..], "ensemble": "NPT|NVT|NVE"}: MD with the current model; early stops reveal weak spots.
- select {"trajectories": [ids], "ratio": 0.05-0.10 | "all", "category_ratios": {"<category>": fraction}}: label and keep the highest force-error frames.
- train {"start": "from_scratch" | {"fine_tune": "<model id>"}, "mode": "quick|accurate", "datasets": [ids]}.
- evaluate {"structures": [validation ids], "model": "<model id>"}: compare density, RDF and diffusion with the reference.
- prune {"models": [ids], "datasets": [ids], "rollback": true|false}: drop outlier frames, optionally restore the previous model.
- end {"success": true|false, "reason": "..."}.

Start with simple components, then interfaces, then the full system. Evaluate when sampling shows no crashes and the error has stabilised. Omitted parameters take sensible defaults."#;

pub struct LlmPolicy<T: ChatTransport> {
    pub transport: T,
    pub settings: LlmSettings,
}

impl<T: ChatTransport> LlmPolicy<T> {
    pub fn new(transport: T, settings: LlmSettings) -> Self {
        Self { transport, settings }
    }

    fn redact(&self, s: &str) -> String {
        match self.transport.secret() {
            Some(k) if !k.is_empty() => s.replace(k, "[redacted]"),
            _ => s.to_string(),
        }
    }

    fn prompt(&self, summary: &StateSummary, ws: &Workspace) -> Vec<ChatMessage> {
        let state = serde_json::to_string_pretty(summary).unwrap_or_default();
        let task = ws.read_text(SUMMARY_FILE).unwrap_or_default();
        let structures = ws.read_text(DESCRIPTION_FILE).unwrap_or_default();
        let dialogue = tail(&ws.read_text(DIALOGUE_FILE).unwrap_or_default(), self.settings.dialogue_tail);
        let user = format!(
            "## Workflow state\n{state}\n\n## Task summary\n{}\n\n## Structures\n{}\n\n## Recent dialogue\n{dialogue}\n\nReply with the JSON object only.",
            tail(&task, 200),
            tail(&structures, 200)
        );
        vec![ChatMessage::new("system", INSTRUCTIONS), ChatMessage::new("user", user)]
    }
}

impl<T: ChatTransport> Policy for LlmPolicy<T> {
    fn decide(&mut self, summary: &StateSummary, ws: &Workspace) -> Result<(Decision, String), WorkflowError> {
        let mut messages = self.prompt(summary, ws);
        let attempts = self.settings.retries.max(1);
        let mut last_error = String::new();
        for attempt in 1..=attempts {
            let reply = self.transport.complete(&messages);
            let mut log = format!("[step {}] request attempt {attempt}/{attempts}\n", summary.step);
            if attempt == 1 {
                for m in &messages {
                    log.push_str(&format!(">>> {}\n{}\n", m.role, m.content));
                }
            } else if let Some(m) = messages.last() {
                log.push_str(&format!(">>> {}\n{}\n", m.role, m.content));
            }
            match reply {
                Err(e) => {
                    log.push_str(&format!("!!! transport error: {e}\n\n"));
                    append_dialogue(&ws.root, &self.redact(&log))?;
                    last_error = format!("transport: {e}");
                }
                Ok(text) => {
                    log.push_str(&format!("<<< assistant\n{text}\n"));
                    match parse_decision(&text) {
                        Ok(d) => {
                            log.push_str(&format!("=== decision: {}\n\n", d.next_task));
                            append_dialogue(&ws.root, &self.redact(&log))?;
                            return Ok((d, LLM_LABEL.into()));
                        }
                        Err(e) => {
                            log.push_str(&format!("!!! unusable reply: {e}\n\n"));
                            append_dialogue(&ws.root, &self.redact(&log))?;
                            last_error = e.to_string();
                            messages.push(ChatMessage::new("assistant", text));
                            messages.push(ChatMessage::new(
                                "user",
                                format!("That reply could not be used: {e}. Reply with one JSON object only."),
                            ));
                        }
                    }
                }
            }
        }
        let d = scripted_decision(summary, &ws.config);
        append_dialogue(
            &ws.root,
            &self.redact(&format!(
                "[step {}] fallback: scripted policy chose {} after {attempts} failed attempts (last error: {last_error})\n\n",
                summary.step, d.next_task
            )),
        )?;
        Ok((d, FALLBACK_LABEL.into()))
    }
}
