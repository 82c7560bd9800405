//! Decision parsing from free-form model replies.

use serde::Deserialize;
use serde_json::{Map, Value};
use thiserror::Error;

use crate::actions::{ActionKind, Directive};

use super::Decision;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParseError {
    #[error("no JSON object found in the reply")]
    NoJson,
    #[error("`next_task` is missing or not a string")]
    MissingTask,
    #[error("illegal next_task `{0}`; expected one of reference_calc, oracle_sample, sample, select, train, evaluate, prune, end")]
    IllegalTask(String),
    #[error("malformed parameters for {task}: {message}")]
    MalformedDirective { task: String, message: String },
}

/// First JSON object embedded in `text`, skipping prose and code fences.
pub fn first_json_object(text: &str) -> Option<Map<String, Value>> {
    text.char_indices().filter(|(_, c)| *c == '{').find_map(|(i, _)| {
        let mut de = serde_json::Deserializer::from_str(&text[i..]);
        match Value::deserialize(&mut de) {
            Ok(Value::Object(m)) => Some(m),
            _ => None,
        }
    })
}

pub fn parse_decision(text: &str) -> Result<Decision, ParseError> {
    let obj = first_json_object(text).ok_or(ParseError::NoJson)?;
    let task = obj.get("next_task").and_then(Value::as_str).ok_or(ParseError::MissingTask)?;
    let kind = ActionKind::parse(task).ok_or_else(|| ParseError::IllegalTask(task.to_string()))?;
    let descriptions = match obj.get("descriptions") {
        None | Some(Value::Null) => String::new(),
        Some(Value::String(s)) => s.clone(),
        Some(other) => other.to_string(),
    };
    let params = match obj.get("parameters") {
        None | Some(Value::Null) => Value::Object(Map::new()),
        Some(v @ Value::Object(_)) => v.clone(),
        Some(_) => {
            return Err(ParseError::MalformedDirective { task: kind.as_str().into(), message: "parameters must be an object".into() })
        }
    };
    let directive = Directive::from_parameters(kind, params)
        .map_err(|e| ParseError::MalformedDirective { task: kind.as_str().into(), message: e.to_string() })?;
    Ok(Decision { next_task: kind, descriptions, directive })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bare_object() {
        let d = parse_decision(r#"{"next_task":"train","descriptions":"fine-tune"}"#).unwrap();
        assert_eq!(d.next_task, ActionKind::Train);
        assert_eq!(d.descriptions, "fine-tune");
    }

    #[test]
    fn fenced_with_prose() {
        let t = "Sure.\n```json\n{\"next_task\": \"sample\", \"parameters\": {\"temperatures\": [300, 450]}}\n```\nDone {not json}";
        let d = parse_decision(t).unwrap();
        let Directive::Sample(p) = d.directive else { panic!() };
        assert_eq!(p.temperatures, vec![300.0, 450.0]);
        assert_eq!(d.descriptions, "");
    }

    #[test]
    fn aliases_and_errors() {
        assert_eq!(parse_decision(r#"{"next_task":"pfp_sample"}"#).unwrap().next_task, ActionKind::OracleSample);
        assert_eq!(parse_decision(r#"{"next_task":"retrain"}"#), Err(ParseError::IllegalTask("retrain".into())));
        assert_eq!(parse_decision("no json here"), Err(ParseError::NoJson));
        assert_eq!(parse_decision(r#"{"task":"train"}"#), Err(ParseError::MissingTask));
        assert!(matches!(
            parse_decision(r#"{"next_task":"select","parameters":{"ratio":0.1,"extra":true}}"#),
            Err(ParseError::MalformedDirective { .. })
        ));
    }
}
