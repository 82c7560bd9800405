//! Typed action directives. Every parameter block rejects unknown fields;
//! omitted parameters are resolved from the workflow state when the action
//! runs.

use std::collections::BTreeMap;
use std::fmt;

use alloop_core::md::Ensemble;
use alloop_core::potential::TrainMode;
use alloop_core::structgen::Category;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionKind {
    ReferenceCalc,
    OracleSample,
    Sample,
    Select,
    Train,
    Evaluate,
    Prune,
    End,
}

impl ActionKind {
    pub const ALL: [ActionKind; 8] = [
        ActionKind::ReferenceCalc,
        ActionKind::OracleSample,
        ActionKind::Sample,
        ActionKind::Select,
        ActionKind::Train,
        ActionKind::Evaluate,
        ActionKind::Prune,
        ActionKind::End,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ActionKind::ReferenceCalc => "reference_calc",
            ActionKind::OracleSample => "oracle_sample",
            ActionKind::Sample => "sample",
            ActionKind::Select => "select",
            ActionKind::Train => "train",
            ActionKind::Evaluate => "evaluate",
            ActionKind::Prune => "prune",
            ActionKind::End => "end",
        }
    }

    /// Canonical names plus the legacy spellings some prompts use.
    pub fn parse(name: &str) -> Option<Self> {
        let canonical = match name.trim().to_ascii_lowercase().as_str() {
            "eval_reference" => "reference_calc",
            "pfp_sample" => "oracle_sample",
            "selection" => "select",
            "evaluation" => "evaluate",
            other => return Self::ALL.into_iter().find(|k| k.as_str() == other),
        };
        Self::parse(canonical)
    }
}

impl fmt::Display for ActionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Selection fraction in (0, 1], or every frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Ratio {
    All,
    Fraction(f64),
}

impl Serialize for Ratio {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Ratio::All => s.serialize_str("all"),
            Ratio::Fraction(x) => s.serialize_f64(*x),
        }
    }
}

impl<'de> Deserialize<'de> for Ratio {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Word(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(x) => Ok(Ratio::Fraction(x)),
            Raw::Word(w) if w == "all" => Ok(Ratio::All),
            Raw::Word(w) => Err(serde::de::Error::custom(format!("ratio must be a number or \"all\", got \"{w}\""))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainStart {
    FromScratch,
    FineTune(String),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReferenceParams {}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleSampleParams {
    /// Restrict to these structure ids.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub structures: Option<Vec<String>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SampleParams {
    /// Empty means the current curriculum stage.
    pub categories: Vec<Category>,
    /// A model id or `oracle`; the current model when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub calculator: Option<String>,
    /// K; the configured sampling temperatures when empty.
    pub temperatures: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ensemble: Option<Ensemble>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectParams {
    /// Empty means the trajectories of the latest sampling.
    pub trajectories: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ratio: Option<Ratio>,
    /// Per-category fractions replacing `ratio` for those categories.
    pub category_ratios: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainParams {
    /// Fine-tune the current model when one exists, else from scratch.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub start: Option<TrainStart>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mode: Option<TrainMode>,
    /// From-scratch only; every active dataset when empty.
    pub datasets: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateParams {
    /// Validation structure ids; the current stage's when empty.
    pub structures: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PruneParams {
    /// Models to compare, newest first; the current model and its parent
    /// when empty.
    pub models: Vec<String>,
    /// Datasets under suspicion; every active dataset when empty.
    pub datasets: Vec<String>,
    /// Deregister the newest model and restore its parent.
    pub rollback: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EndParams {
    pub success: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", content = "parameters", rename_all = "snake_case")]
pub enum Directive {
    ReferenceCalc(ReferenceParams),
    OracleSample(OracleSampleParams),
    Sample(SampleParams),
    Select(SelectParams),
    Train(TrainParams),
    Evaluate(EvaluateParams),
    Prune(PruneParams),
    End(EndParams),
}

impl Directive {
    pub fn kind(&self) -> ActionKind {
        match self {
            Directive::ReferenceCalc(_) => ActionKind::ReferenceCalc,
            Directive::OracleSample(_) => ActionKind::OracleSample,
            Directive::Sample(_) => ActionKind::Sample,
            Directive::Select(_) => ActionKind::Select,
            Directive::Train(_) => ActionKind::Train,
            Directive::Evaluate(_) => ActionKind::Evaluate,
            Directive::Prune(_) => ActionKind::Prune,
            Directive::End(_) => ActionKind::End,
        }
    }

    /// Parses a parameter object for `kind`.
    pub fn from_parameters(kind: ActionKind, parameters: serde_json::Value) -> Result<Self, serde_json::Error> {
        serde_json::from_value(serde_json::json!({ "action": kind.as_str(), "parameters": parameters }))
    }

    /// Parameter object alone.
    pub fn parameters(&self) -> serde_json::Value {
        let v = serde_json::to_value(self).unwrap_or_default();
        v.get("parameters").cloned().unwrap_or_else(|| serde_json::json!({}))
    }

    pub fn end(success: bool, reason: impl Into<String>) -> Self {
        Directive::End(EndParams { success, reason: Some(reason.into()) })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn aliases_resolve() {
        assert_eq!(ActionKind::parse("eval_reference"), Some(ActionKind::ReferenceCalc));
        assert_eq!(ActionKind::parse("pfp_sample"), Some(ActionKind::OracleSample));
        assert_eq!(ActionKind::parse("selection"), Some(ActionKind::Select));
        assert_eq!(ActionKind::parse("evaluation"), Some(ActionKind::Evaluate));
        assert_eq!(ActionKind::parse("retrain"), None);
        for k in ActionKind::ALL {
            assert_eq!(ActionKind::parse(k.as_str()), Some(k));
        }
    }

    #[test]
    fn unknown_parameters_are_rejected() {
        assert!(Directive::from_parameters(ActionKind::Select, json!({"ratio": 0.1, "colour": 1})).is_err());
        let d = Directive::from_parameters(ActionKind::Select, json!({"ratio": "all"})).unwrap();
        assert_eq!(d, Directive::Select(SelectParams { ratio: Some(Ratio::All), ..Default::default() }));
        assert!(Directive::from_parameters(ActionKind::Select, json!({"ratio": "most"})).is_err());
    }

    #[test]
    fn train_start_spellings() {
        let d = Directive::from_parameters(ActionKind::Train, json!({"start": {"fine_tune": "model_004"}, "mode": "quick"}))
            .unwrap();
        let Directive::Train(p) = &d else { panic!() };
        assert_eq!(p.start, Some(TrainStart::FineTune("model_004".into())));
        assert_eq!(p.mode, Some(TrainMode::Quick));
        let again = Directive::from_parameters(ActionKind::Train, d.parameters()).unwrap();
        assert_eq!(again, d);
    }

    #[test]
    fn empty_parameters_take_defaults() {
        for k in ActionKind::ALL {
            let d = Directive::from_parameters(k, json!({})).unwrap();
            assert_eq!(d.kind(), k);
        }
    }
}
