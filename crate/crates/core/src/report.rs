//! Append-only JSON-lines reports.
//!
//! Each line is `{"variant": ..., "timestamp": ..., "step": ..., "payload": {...}}`.
//! Appends to one file are serialized through a per-path lock and written
//! with a single `write_all` on an append-mode handle.

use std::collections::{BTreeMap, HashMap};
use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, OnceLock};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("record does not serialize: {0}")]
    Serialize(#[from] serde_json::Error),
    #[error("{path}: line {line}: {message}: {raw}")]
    Corrupt { path: String, line: usize, raw: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub dataset_id: String,
    pub structure_count: usize,
    pub total_atoms: usize,
    pub energy_per_atom_min: f64,
    pub energy_per_atom_max: f64,
    pub max_force_max: f64,
    pub origin: Vec<String>,
    pub path: String,
    /// `active`, or `pruned` after frames were moved out.
    pub status: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainRecord {
    pub model_id: String,
    pub parent_id: Option<String>,
    pub energy_mae: f64,
    pub force_mae: f64,
    pub outlier_count: usize,
    pub frame_count: usize,
    pub trained_on: Vec<String>,
    pub mode: String,
    pub epochs: u32,
    pub path: String,
    /// `registered`, or `rolled_back` when a prune deregistered the model.
    pub status: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MdConditions {
    pub ensemble: String,
    pub temperature: f64,
    pub pressure: f64,
    pub dt: f64,
    pub steps: usize,
    pub snapshot_interval: usize,
    pub equilibration_steps: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub trajectory_id: String,
    pub structure_id: String,
    pub category: String,
    pub calculator_id: String,
    pub snapshot_count: usize,
    pub steps_completed: usize,
    pub conditions: MdConditions,
    /// `completed` or `early_stop`.
    pub status: String,
    pub reason: Option<String>,
    pub path: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffusionComparison {
    pub model: f64,
    pub reference: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationRecord {
    pub structure_id: String,
    pub model_id: String,
    pub density_model: Option<f64>,
    pub density_reference: Option<f64>,
    pub density_deviation_pct: Option<f64>,
    /// First-peak position error per species pair (Å).
    pub rdf_peak_error: BTreeMap<String, f64>,
    /// Diffusion coefficients per species (cm²/s).
    pub diffusion: BTreeMap<String, DiffusionComparison>,
    pub status: String,
    pub reason: Option<String>,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionRecord {
    pub next_task: String,
    pub descriptions: String,
    pub directive: Value,
    /// Which policy produced the decision (`scripted`, `llm`, `llm_fallback`).
    pub policy: String,
    pub ok: bool,
    pub outcome: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    Dataset(DatasetRecord),
    Train(TrainRecord),
    Trajectory(TrajectoryRecord),
    Evaluation(EvaluationRecord),
    Decision(DecisionRecord),
    /// A variant this build does not know, kept verbatim.
    Raw { variant: String, payload: Value },
}

impl Payload {
    pub fn variant(&self) -> &str {
        match self {
            Payload::Dataset(_) => "DatasetRecord",
            Payload::Train(_) => "TrainRecord",
            Payload::Trajectory(_) => "TrajectoryRecord",
            Payload::Evaluation(_) => "EvaluationRecord",
            Payload::Decision(_) => "DecisionRecord",
            Payload::Raw { variant, .. } => variant,
        }
    }

    fn to_value(&self) -> Result<Value, serde_json::Error> {
        match self {
            Payload::Dataset(r) => serde_json::to_value(r),
            Payload::Train(r) => serde_json::to_value(r),
            Payload::Trajectory(r) => serde_json::to_value(r),
            Payload::Evaluation(r) => serde_json::to_value(r),
            Payload::Decision(r) => serde_json::to_value(r),
            Payload::Raw { payload, .. } => Ok(payload.clone()),
        }
    }

    fn from_value(variant: &str, payload: Value) -> Result<Self, serde_json::Error> {
        Ok(match variant {
            "DatasetRecord" => Payload::Dataset(serde_json::from_value(payload)?),
            "TrainRecord" => Payload::Train(serde_json::from_value(payload)?),
            "TrajectoryRecord" => Payload::Trajectory(serde_json::from_value(payload)?),
            "EvaluationRecord" => Payload::Evaluation(serde_json::from_value(payload)?),
            "DecisionRecord" => Payload::Decision(serde_json::from_value(payload)?),
            other => Payload::Raw { variant: other.to_string(), payload },
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRecord {
    pub timestamp: String,
    pub step: u64,
    pub payload: Payload,
}

#[derive(Serialize, Deserialize)]
struct Envelope {
    variant: String,
    timestamp: String,
    step: u64,
    payload: Value,
}

impl ReportRecord {
    /// A record stamped with the current UTC time.
    pub fn now(step: u64, payload: Payload) -> Self {
        let timestamp = chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true);
        Self { timestamp, step, payload }
    }

    pub fn to_line(&self) -> Result<String, serde_json::Error> {
        serde_json::to_string(&Envelope {
            variant: self.payload.variant().to_string(),
            timestamp: self.timestamp.clone(),
            step: self.step,
            payload: self.payload.to_value()?,
        })
    }

    pub fn from_line(line: &str) -> Result<Self, serde_json::Error> {
        let env: Envelope = serde_json::from_str(line)?;
        Ok(Self { timestamp: env.timestamp, step: env.step, payload: Payload::from_value(&env.variant, env.payload)? })
    }
}

fn file_lock(path: &Path) -> Arc<Mutex<()>> {
    static LOCKS: OnceLock<Mutex<HashMap<PathBuf, Arc<Mutex<()>>>>> = OnceLock::new();
    let key = std::path::absolute(path).unwrap_or_else(|_| path.to_path_buf());
    let mut map = LOCKS.get_or_init(Default::default).lock().unwrap_or_else(|e| e.into_inner());
    map.entry(key).or_default().clone()
}

/// Appends one record as a single line.
pub fn append_record(path: &Path, record: &ReportRecord) -> Result<(), ReportError> {
    let mut line = record.to_line()?;
    line.push('\n');
    let lock = file_lock(path);
    let _guard = lock.lock().unwrap_or_else(|e| e.into_inner());
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let mut f = OpenOptions::new().create(true).append(true).open(path)?;
    f.write_all(line.as_bytes())?;
    Ok(())
}

/// Records read from a report file, with any lines that failed to parse.
#[derive(Debug, Default)]
pub struct ReportLog {
    pub records: Vec<ReportRecord>,
    pub errors: Vec<ReportError>,
}

impl ReportLog {
    /// The records, or the first corrupt-line error.
    pub fn strict(self) -> Result<Vec<ReportRecord>, ReportError> {
        match self.errors.into_iter().next() {
            Some(e) => Err(e),
            None => Ok(self.records),
        }
    }
}

/// Reads records in file order. A missing file reads as empty.
pub fn read_records(path: &Path) -> Result<ReportLog, ReportError> {
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(ReportLog::default()),
        Err(e) => return Err(e.into()),
    };
    let mut log = ReportLog::default();
    for (k, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match ReportRecord::from_line(line) {
            Ok(r) => log.records.push(r),
            Err(e) => log.errors.push(ReportError::Corrupt {
                path: path.display().to_string(),
                line: k + 1,
                raw: line.to_string(),
                message: e.to_string(),
            }),
        }
    }
    Ok(log)
}

/// Rewrites a report file keeping only records with `step < limit`. Used
/// when resuming after an interruption mid-step. A final line without its
/// newline is a torn write and is dropped too.
pub fn truncate_from_step(path: &Path, limit: u64) -> Result<usize, ReportError> {
    let lock = file_lock(path);
    let _guard = lock.lock().unwrap_or_else(|e| e.into_inner());
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(0),
        Err(e) => return Err(e.into()),
    };
    let mut kept = String::new();
    let mut dropped = 0;
    let torn = !text.is_empty() && !text.ends_with('\n');
    let n = text.lines().count();
    for (k, line) in text.lines().enumerate() {
        let keep = match serde_json::from_str::<Envelope>(line) {
            _ if torn && k + 1 == n => false,
            Ok(env) => env.step < limit,
            Err(_) => true,
        };
        if keep {
            kept.push_str(line);
            kept.push('\n');
        } else {
            dropped += 1;
        }
    }
    if dropped > 0 {
        let tmp = path.with_extension("jsonl.tmp");
        std::fs::write(&tmp, kept)?;
        std::fs::rename(tmp, path)?;
    }
    Ok(dropped)
}
