//! Task specifications: the system to model, how to build it and what to
//! measure.

use std::collections::BTreeSet;
use std::path::Path;

use alloop_core::elements::MassTable;
use alloop_core::md::Ensemble;
use alloop_core::oracle::OracleSpec;
use alloop_core::structgen::{BuildPlan, Builder, Category};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::config::{Config, Stage};
use crate::error::WorkflowError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Targets {
    #[serde(default = "yes")]
    pub density: bool,
    #[serde(default)]
    pub rdf_pairs: Vec<[String; 2]>,
    #[serde(default)]
    pub diffusion_species: Vec<String>,
}

fn yes() -> bool {
    true
}

/// Which structures are held out for evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValidationPolicy {
    /// Variant 0 of every plan.
    FirstVariant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskSpec {
    pub system: String,
    pub categories: Vec<BuildPlan>,
    /// K, inclusive.
    pub temperature_range: [f64; 2],
    pub ensembles: Vec<Ensemble>,
    pub targets: Targets,
    pub validation: ValidationPolicy,
    pub oracle: OracleSpec,
    /// Curriculum; derived from the categories when empty.
    #[serde(default)]
    pub stages: Vec<Stage>,
    /// Å; closest pair allowed in a generated structure.
    #[serde(default = "default_min_separation")]
    pub min_separation: f64,
    #[serde(default)]
    pub masses: MassTable,
    /// Overrides merged into the default configuration.
    #[serde(default)]
    pub config: Option<Value>,
    pub complete: bool,
}

fn default_min_separation() -> f64 {
    1.5
}

pub const REQUIRED_FIELDS: &[&str] =
    &["system", "categories", "temperature_range", "ensembles", "targets", "validation", "oracle", "complete"];

impl TaskSpec {
    /// Parses and validates. Missing fields are all reported at once.
    pub fn from_json(text: &str) -> Result<Self, WorkflowError> {
        let value: Value = serde_json::from_str(text).map_err(|e| WorkflowError::Task(e.to_string()))?;
        Self::from_value(value)
    }

    pub fn from_value(value: Value) -> Result<Self, WorkflowError> {
        let obj = value.as_object().ok_or_else(|| WorkflowError::Task("expected a JSON object".into()))?;
        let missing: Vec<String> = REQUIRED_FIELDS
            .iter()
            .filter(|f| obj.get(**f).is_none_or(Value::is_null))
            .map(|f| f.to_string())
            .collect();
        if !missing.is_empty() {
            return Err(WorkflowError::MissingFields(missing));
        }
        let spec: TaskSpec = serde_json::from_value(value).map_err(|e| WorkflowError::Task(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self, WorkflowError> {
        let text = std::fs::read_to_string(path).map_err(|e| WorkflowError::io(path, e))?;
        Self::from_json(&text)
    }

    fn validate(&self) -> Result<(), WorkflowError> {
        let bad = |m: String| Err(WorkflowError::Task(m));
        if !self.complete {
            return bad("completion flag is false; finish the specification first".into());
        }
        if self.system.trim().is_empty() {
            return bad("system name is empty".into());
        }
        if self.categories.is_empty() {
            return bad("no structure categories".into());
        }
        let [lo, hi] = self.temperature_range;
        if !(lo > 0.0 && hi >= lo) {
            return bad(format!("temperature range [{lo}, {hi}] is not a positive interval"));
        }
        if self.ensembles.is_empty() {
            return bad("no ensembles".into());
        }
        self.oracle.validate()?;
        let mut names = BTreeSet::new();
        for p in &self.categories {
            if !names.insert(p.name.as_str()) {
                return bad(format!("duplicate plan name `{}`", p.name));
            }
        }
        let present: BTreeSet<Category> = self.categories.iter().map(|p| p.category).collect();
        for s in &self.stages {
            if let Some(c) = s.categories.iter().find(|c| !present.contains(c)) {
                return bad(format!("stage `{}` names category `{}` with no plan", s.name, c.as_str()));
            }
        }
        let species = self.species();
        for [a, b] in &self.targets.rdf_pairs {
            if !species.contains(a) || !species.contains(b) {
                return bad(format!("RDF pair {a}-{b} names a species not in the task"));
            }
        }
        if let Some(s) = self.targets.diffusion_species.iter().find(|s| !species.contains(*s)) {
            return bad(format!("diffusion species `{s}` is not in the task"));
        }
        Ok(())
    }

    /// Every species any plan can produce.
    pub fn species(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        for p in &self.categories {
            collect_species(&p.builder, &mut out);
        }
        out
    }

    /// The explicit curriculum, or components, then interfaces, then
    /// everything together.
    pub fn curriculum(&self) -> Vec<Stage> {
        if !self.stages.is_empty() {
            return self.stages.clone();
        }
        let present: Vec<Category> = {
            let mut v: Vec<Category> = self.categories.iter().map(|p| p.category).collect();
            v.sort();
            v.dedup();
            v
        };
        let components: Vec<Category> = present.iter().copied().filter(|c| !is_interface(*c)).collect();
        let interfaces: Vec<Category> = present.iter().copied().filter(|c| is_interface(*c)).collect();
        let mut stages = Vec::new();
        if !components.is_empty() {
            stages.push(Stage { name: "components".into(), categories: components });
        }
        if !interfaces.is_empty() {
            stages.push(Stage { name: "interfaces".into(), categories: interfaces });
        }
        if stages.len() > 1 {
            stages.push(Stage { name: "full_assembly".into(), categories: present });
        }
        stages
    }

    /// The workspace configuration this task implies.
    pub fn config(&self, seed: u64) -> Result<Config, WorkflowError> {
        let mut c = Config::with_overrides(seed, self.oracle.clone(), self.config.as_ref())?;
        for (k, v) in &self.masses {
            c.masses.entry(k.clone()).or_insert(*v);
        }
        if c.policy.stages.is_empty() {
            c.policy.stages = self.curriculum();
        }
        if c.sampling.temperatures.is_empty() {
            let [lo, hi] = self.temperature_range;
            c.sampling.temperatures = if hi > lo { vec![lo, 0.5 * (lo + hi), hi] } else { vec![lo] };
        }
        if c.evaluation.rdf_pairs.is_empty() {
            c.evaluation.rdf_pairs = self.targets.rdf_pairs.clone();
        }
        if c.evaluation.diffusion_species.is_empty() {
            c.evaluation.diffusion_species = self.targets.diffusion_species.clone();
        }
        Ok(c)
    }
}

fn is_interface(c: Category) -> bool {
    matches!(c, Category::SolidSolid | Category::SolidLiquid | Category::LiquidLiquid | Category::Multilayer)
}

fn collect_species(b: &Builder, out: &mut BTreeSet<String>) {
    match b {
        Builder::Solid { species, .. } => out.extend(species.iter().cloned()),
        Builder::Packed { counts, .. } => out.extend(counts.keys().cloned()),
        Builder::Slab { bulk, .. } | Builder::Cluster { bulk, .. } => collect_species(bulk, out),
        Builder::Stack { layers, .. } => layers.iter().for_each(|l| collect_species(l, out)),
    }
}
