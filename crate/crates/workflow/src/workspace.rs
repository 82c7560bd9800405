//! On-disk workspace layout.
//!
//! ```text
//! init_structures/  trajectories/  selection/  models/  eval_reference/
//! evaluation/  pruned/  reports/  dialogue.log  information_summary_report.txt
//! workflow_state.json  final_report.json  config.json
//! ```

use std::collections::BTreeSet;
use std::fs::File;
use std::path::{Path, PathBuf};

use alloop_core::elements::{mass_table, MassTable};
use alloop_core::extxyz;
use alloop_core::report::{append_record, Payload, ReportRecord};
use alloop_core::structgen::Category;
use alloop_core::AtomicConfiguration;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::config::Config;
use crate::error::WorkflowError;
use crate::state::{report_file, WorkflowState};

pub const DIRS: &[&str] =
    &["init_structures", "trajectories", "selection", "models", "eval_reference", "evaluation", "pruned", "reports"];

pub const CONFIG_FILE: &str = "config.json";
pub const STATE_FILE: &str = "workflow_state.json";
pub const DIALOGUE_FILE: &str = "dialogue.log";
pub const SUMMARY_FILE: &str = "information_summary_report.txt";
pub const FINAL_REPORT_FILE: &str = "final_report.json";
pub const FINAL_REPORT_TEXT: &str = "final_report.txt";
pub const DESCRIPTION_FILE: &str = "init_structures/init_structure_description.txt";
const LOCK_FILE: &str = ".lock";

/// One line of the structure description file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructureInfo {
    pub id: String,
    pub category: Category,
    pub is_validation: bool,
}

#[derive(Debug)]
pub struct Workspace {
    pub root: PathBuf,
    pub config: Config,
    lock: Option<File>,
}

impl Workspace {
    /// Creates the layout in an empty or absent directory and writes the
    /// configuration.
    pub fn create(root: &Path, config: &Config) -> Result<Self, WorkflowError> {
        if root.exists() {
            let mut entries = std::fs::read_dir(root).map_err(|e| WorkflowError::io(root, e))?;
            if entries.next().is_some() {
                return Err(WorkflowError::Workspace(format!("{} is not empty", root.display())));
            }
        }
        for d in DIRS {
            let p = root.join(d);
            std::fs::create_dir_all(&p).map_err(|e| WorkflowError::io(&p, e))?;
        }
        config.save(&root.join(CONFIG_FILE))?;
        Ok(Self { root: root.to_path_buf(), config: config.clone(), lock: None })
    }

    pub fn open(root: &Path) -> Result<Self, WorkflowError> {
        let cfg = root.join(CONFIG_FILE);
        if !cfg.is_file() {
            return Err(WorkflowError::Workspace(format!("{}: no {CONFIG_FILE}; run `prepare` first", root.display())));
        }
        let config = Config::load(&cfg)?;
        Ok(Self { root: root.to_path_buf(), config, lock: None })
    }

    /// Takes the exclusive workspace lock for the lifetime of `self`.
    pub fn lock(&mut self) -> Result<(), WorkflowError> {
        let p = self.root.join(LOCK_FILE);
        let f = File::create(&p).map_err(|e| WorkflowError::io(&p, e))?;
        match f.try_lock() {
            Ok(()) => {
                self.lock = Some(f);
                Ok(())
            }
            Err(std::fs::TryLockError::WouldBlock) => Err(WorkflowError::Locked(self.root.display().to_string())),
            Err(std::fs::TryLockError::Error(e)) => Err(WorkflowError::io(&p, e)),
        }
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    pub fn reports_dir(&self) -> PathBuf {
        self.root.join("reports")
    }

    pub fn state_path(&self) -> PathBuf {
        self.root.join(STATE_FILE)
    }

    pub fn load_state(&self) -> Result<WorkflowState, WorkflowError> {
        let p = self.state_path();
        if !p.is_file() {
            return Err(WorkflowError::Workspace(format!("{}: no persisted {STATE_FILE}", self.root.display())));
        }
        WorkflowState::load(&p)
    }

    pub fn save_state(&self, state: &WorkflowState) -> Result<(), WorkflowError> {
        state.save(&self.state_path())
    }

    /// Appends one record to its report file.
    pub fn append(&self, step: u64, payload: Payload) -> Result<ReportRecord, WorkflowError> {
        let rec = ReportRecord::now(step, payload);
        append_record(&self.reports_dir().join(report_file(&rec.payload)), &rec)?;
        Ok(rec)
    }

    pub fn structure_infos(&self) -> Result<Vec<StructureInfo>, WorkflowError> {
        let p = self.path(DESCRIPTION_FILE);
        let text = std::fs::read_to_string(&p).map_err(|e| WorkflowError::io(&p, e))?;
        parse_descriptions(&text)
    }

    pub fn load_structure(&self, id: &str) -> Result<AtomicConfiguration, WorkflowError> {
        let p = self.path(&format!("init_structures/{id}.extxyz"));
        let frames = extxyz::read_file(&p).map_err(|e| WorkflowError::Frames(format!("{}: {e}", p.display())))?;
        let mut c = frames
            .into_iter()
            .next()
            .ok_or_else(|| WorkflowError::Frames(format!("{}: empty", p.display())))?
            .into_config();
        c.structure_id = id.to_string();
        Ok(c)
    }

    /// Every structure with its annotation, in description order.
    pub fn structures(&self) -> Result<Vec<(StructureInfo, AtomicConfiguration)>, WorkflowError> {
        self.structure_infos()?
            .into_iter()
            .map(|i| {
                let mut c = self.load_structure(&i.id)?;
                c.is_validation = i.is_validation;
                Ok((i, c))
            })
            .collect()
    }

    /// Species across the structure set, sorted.
    pub fn species(&self) -> Result<Vec<String>, WorkflowError> {
        let mut s = BTreeSet::new();
        for (_, c) in self.structures()? {
            s.extend(c.species);
        }
        Ok(s.into_iter().collect())
    }

    pub fn masses(&self, species: &[String]) -> Result<MassTable, WorkflowError> {
        mass_table(species.iter().map(String::as_str), &self.config.masses)
            .map_err(|s| WorkflowError::Config(format!("no mass for species `{s}`; add it under `masses`")))
    }

    pub fn read_text(&self, rel: &str) -> Option<String> {
        std::fs::read_to_string(self.path(rel)).ok()
    }
}

/// Parses `id<TAB>category<TAB>builder json<TAB>validation=0|1` lines.
pub fn parse_descriptions(text: &str) -> Result<Vec<StructureInfo>, WorkflowError> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let bad = |m: &str| WorkflowError::Workspace(format!("{DESCRIPTION_FILE}: line {}: {m}", n + 1));
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 4 {
            return Err(bad("expected four tab-separated columns"));
        }
        let category: Category =
            serde_json::from_value(Value::String(cols[1].into())).map_err(|_| bad("unknown category"))?;
        let is_validation = match cols[3] {
            "validation=1" => true,
            "validation=0" => false,
            _ => return Err(bad("bad validation flag")),
        };
        out.push(StructureInfo { id: cols[0].to_string(), category, is_validation });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn descriptions_parse() {
        let s = "a_00\tsolid\t{}\tvalidation=1\nb_01\tsolid_liquid\t{\"k\":1}\tvalidation=0\n";
        let v = parse_descriptions(s).unwrap();
        assert_eq!(v.len(), 2);
        assert!(v[0].is_validation);
        assert_eq!(v[1].category, Category::SolidLiquid);
        assert!(parse_descriptions("x\tsolid\t{}\n").is_err());
        assert!(parse_descriptions("x\tgas\t{}\tvalidation=0\n").is_err());
    }

    #[test]
    fn second_lock_is_refused() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join(CONFIG_FILE), "{}").unwrap();
        let mut a = Workspace { root: dir.path().into(), config: test_config(), lock: None };
        let mut b = Workspace { root: dir.path().into(), config: test_config(), lock: None };
        a.lock().unwrap();
        assert!(matches!(b.lock(), Err(WorkflowError::Locked(_))));
        drop(a);
        b.lock().unwrap();
    }

    fn test_config() -> Config {
        let oracle = serde_json::from_value(serde_json::json!({
            "kind": "lennard_jones", "pairs": {"Ar-Ar": {"epsilon": 0.01, "sigma": 3.4}}, "cutoff": 8.5
        }))
        .unwrap();
        Config::with_overrides(0, oracle, None).unwrap()
    }
}
