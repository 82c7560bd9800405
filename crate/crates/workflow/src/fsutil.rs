//! Small file helpers.

use std::path::Path;

use crate::error::WorkflowError;

/// Writes through a sibling temporary file and renames it into place, so
/// readers see either the old or the new contents.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), WorkflowError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| WorkflowError::io(dir, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    std::fs::write(&tmp, bytes).map_err(|e| WorkflowError::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| WorkflowError::io(path, e))
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), WorkflowError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| WorkflowError::Workspace(e.to_string()))?;
    write_atomic(path, (text + "\n").as_bytes())
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, WorkflowError> {
    let text = std::fs::read_to_string(path).map_err(|e| WorkflowError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| WorkflowError::Workspace(format!("{}: {e}", path.display())))
}
