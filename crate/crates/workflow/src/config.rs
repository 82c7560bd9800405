//! Workspace configuration, stored as `config.json`.
//!
//! Defaults live here; a task spec may override any subset through its
//! `config` object, which is merged key by key before deserialization.

use std::collections::BTreeMap;
use std::path::Path;

use alloop_core::elements::MassTable;
use alloop_core::md::{AnomalyThresholds, Ensemble, MdProtocol};
use alloop_core::oracle::OracleSpec;
use alloop_core::potential::{BasisSettings, TrainMode, DEFAULT_BETA, DEFAULT_LAMBDA};
use alloop_core::structgen::Category;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::WorkflowError;

/// Length and sampling cadence of one MD run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunLength {
    pub steps: usize,
    pub snapshot_interval: usize,
    pub equilibration_steps: usize,
}

impl RunLength {
    /// A run emitting `snapshots` frames after `equilibration_steps`.
    pub fn with_snapshots(snapshots: usize, snapshot_interval: usize, equilibration_steps: usize) -> Self {
        let steps = equilibration_steps + snapshot_interval * snapshots.saturating_sub(1);
        Self { steps: steps.max(equilibration_steps + 1), snapshot_interval, equilibration_steps }
    }
}

/// Integrator and coupling constants shared by every run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MdSettings {
    pub dt: f64,
    pub pressure: f64,
    pub tau_t: f64,
    pub tau_p: f64,
    pub compressibility: f64,
    pub skin: f64,
}

impl Default for MdSettings {
    fn default() -> Self {
        let p = MdProtocol::default();
        Self {
            dt: p.dt,
            pressure: p.pressure,
            tau_t: p.tau_t,
            tau_p: p.tau_p,
            compressibility: p.compressibility,
            skin: p.skin,
        }
    }
}

impl MdSettings {
    pub fn protocol(&self, ensemble: Ensemble, temperature: f64, run: &RunLength, seed: u64) -> MdProtocol {
        MdProtocol {
            ensemble,
            temperature,
            pressure: self.pressure,
            dt: self.dt,
            n_steps: run.steps,
            snapshot_interval: run.snapshot_interval,
            equilibration_steps: Some(run.equilibration_steps),
            tau_t: self.tau_t,
            tau_p: self.tau_p,
            compressibility: self.compressibility,
            skin: self.skin,
            seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingSettings {
    pub lambda: f64,
    pub beta: f64,
    /// Residual z-score beyond which a frame is an outlier.
    pub z_max: f64,
}

impl Default for TrainingSettings {
    fn default() -> Self {
        Self { lambda: DEFAULT_LAMBDA, beta: DEFAULT_BETA, z_max: 5.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReferenceSettings {
    pub ensemble: Ensemble,
    pub temperature: f64,
    pub run: RunLength,
}

impl Default for ReferenceSettings {
    fn default() -> Self {
        Self { ensemble: Ensemble::Npt, temperature: 300.0, run: RunLength::with_snapshots(500, 10, 1000) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Rung {
    pub ensemble: Ensemble,
    pub temperature: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompressionScan {
    pub min_scale: f64,
    pub max_scale: f64,
    pub points: usize,
}

impl CompressionScan {
    pub fn scales(&self) -> Vec<f64> {
        match self.points {
            0 => Vec::new(),
            1 => vec![self.min_scale],
            n => (0..n).map(|k| self.min_scale + (self.max_scale - self.min_scale) * k as f64 / (n - 1) as f64).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Rattle {
    /// Å, per Cartesian component.
    pub sigma: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleSampleSettings {
    pub ladder: Vec<Rung>,
    pub run: RunLength,
    pub compression: CompressionScan,
    pub rattle: Rattle,
    /// Restrict initial sampling to these structure ids.
    pub structures: Option<Vec<String>>,
}

impl Default for OracleSampleSettings {
    fn default() -> Self {
        Self {
            ladder: vec![
                Rung { ensemble: Ensemble::Npt, temperature: 300.0 },
                Rung { ensemble: Ensemble::Npt, temperature: 600.0 },
                Rung { ensemble: Ensemble::Npt, temperature: 1000.0 },
                Rung { ensemble: Ensemble::Nvt, temperature: 1500.0 },
            ],
            run: RunLength::with_snapshots(20, 50, 1000),
            compression: CompressionScan { min_scale: 0.92, max_scale: 1.08, points: 9 },
            rattle: Rattle { sigma: 0.05, count: 5 },
            structures: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplingSettings {
    pub ensemble: Ensemble,
    /// Empty means the task's temperature range endpoints and midpoint.
    pub temperatures: Vec<f64>,
    pub run: RunLength,
}

impl Default for SamplingSettings {
    fn default() -> Self {
        Self { ensemble: Ensemble::Npt, temperatures: Vec::new(), run: RunLength::with_snapshots(100, 10, 200) }
    }
}

/// A curriculum stage: the categories sampled and evaluated together.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Stage {
    pub name: String,
    pub categories: Vec<Category>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicySettings {
    pub select_ratio: f64,
    /// Ratio multiplier for categories whose last sampling had early stops.
    pub boost: f64,
    /// Fixed per-category ratios, overriding the base ratio.
    pub category_ratios: BTreeMap<String, f64>,
    /// Relative force-MAE improvement below which the model counts as stable.
    pub mae_tolerance: f64,
    pub budget: u64,
    /// Rounds of sample, select and train before an evaluation is allowed.
    pub min_rounds: usize,
    /// Rounds after which an evaluation is forced.
    pub max_rounds: usize,
    pub history: usize,
    /// `false` runs initial sampling, one training and one evaluation only.
    pub loop_enabled: bool,
    pub first_train_mode: TrainMode,
    pub loop_train_mode: TrainMode,
    pub stages: Vec<Stage>,
}

impl Default for PolicySettings {
    fn default() -> Self {
        Self {
            select_ratio: 0.075,
            boost: 2.0,
            category_ratios: BTreeMap::new(),
            mae_tolerance: 0.05,
            budget: 40,
            min_rounds: 2,
            max_rounds: 3,
            history: 20,
            loop_enabled: true,
            first_train_mode: TrainMode::Accurate,
            loop_train_mode: TrainMode::Accurate,
            stages: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationSettings {
    /// Pass bound on the density deviation, percent.
    pub density_bound_pct: f64,
    pub rdf_r_max: f64,
    pub rdf_bins: usize,
    /// Late fraction of the MSD curve used for the diffusion fit.
    pub msd_fit_fraction: f64,
    pub rdf_pairs: Vec<[String; 2]>,
    pub diffusion_species: Vec<String>,
}

impl Default for EvaluationSettings {
    fn default() -> Self {
        Self {
            density_bound_pct: 5.0,
            rdf_r_max: 6.0,
            rdf_bins: 120,
            msd_fit_fraction: 0.5,
            rdf_pairs: Vec::new(),
            diffusion_species: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LlmSettings {
    pub endpoint: Option<String>,
    pub model: Option<String>,
    pub timeout_s: u64,
    /// Attempts before falling back to the scripted policy.
    pub retries: usize,
    pub api_key_env: String,
    /// Lines of `dialogue.log` included in each prompt.
    pub dialogue_tail: usize,
}

impl Default for LlmSettings {
    fn default() -> Self {
        Self {
            endpoint: None,
            model: None,
            timeout_s: 120,
            retries: 3,
            api_key_env: "ALLOOP_LLM_API_KEY".into(),
            dialogue_tail: 40,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub seed: u64,
    pub oracle: OracleSpec,
    #[serde(default)]
    pub masses: MassTable,
    #[serde(default)]
    pub basis: BasisSettings,
    #[serde(default)]
    pub training: TrainingSettings,
    #[serde(default)]
    pub md: MdSettings,
    #[serde(default)]
    pub thresholds: AnomalyThresholds,
    #[serde(default)]
    pub reference: ReferenceSettings,
    #[serde(default)]
    pub oracle_sample: OracleSampleSettings,
    #[serde(default)]
    pub sampling: SamplingSettings,
    #[serde(default)]
    pub policy: PolicySettings,
    #[serde(default)]
    pub evaluation: EvaluationSettings,
    /// Worker threads inside actions; all logical cores when absent.
    #[serde(default)]
    pub workers: Option<usize>,
    #[serde(default)]
    pub llm: LlmSettings,
}

impl Config {
    /// Defaults around an oracle, with `overrides` merged on top.
    pub fn with_overrides(seed: u64, oracle: OracleSpec, overrides: Option<&Value>) -> Result<Self, WorkflowError> {
        // The surrogate sees at least as far as the oracle unless told otherwise.
        let basis = BasisSettings { cutoff: oracle.cutoff, ..BasisSettings::default() };
        let base = Config {
            seed,
            oracle,
            masses: MassTable::new(),
            basis,
            training: TrainingSettings::default(),
            md: MdSettings::default(),
            thresholds: AnomalyThresholds::default(),
            reference: ReferenceSettings::default(),
            oracle_sample: OracleSampleSettings::default(),
            sampling: SamplingSettings::default(),
            policy: PolicySettings::default(),
            evaluation: EvaluationSettings::default(),
            workers: None,
            llm: LlmSettings::default(),
        };
        let Some(patch) = overrides else {
            return Ok(base);
        };
        let mut value = serde_json::to_value(&base).map_err(|e| WorkflowError::Config(e.to_string()))?;
        merge(&mut value, patch);
        serde_json::from_value(value).map_err(|e| WorkflowError::Config(format!("config override: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, WorkflowError> {
        let text = std::fs::read_to_string(path).map_err(|e| WorkflowError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| WorkflowError::Config(format!("{}: {e}", path.display())))
    }

    pub fn save(&self, path: &Path) -> Result<(), WorkflowError> {
        let text = serde_json::to_string_pretty(self).map_err(|e| WorkflowError::Config(e.to_string()))?;
        crate::fsutil::write_atomic(path, (text + "\n").as_bytes())
    }

    pub fn seeds(&self) -> alloop_core::seed::SeedPolicy {
        alloop_core::seed::SeedPolicy::new(self.seed)
    }
}

/// Recursive object merge; non-object values in `patch` replace.
pub fn merge(base: &mut Value, patch: &Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k.clone(), v.clone());
                    }
                }
            }
        }
        (slot, v) => *slot = v.clone(),
    }
}
