//! Versioned snapshots of a run.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::journal::JournalCursor;
use super::rng::RngState;
use super::RuntimeError;
use crate::promptkit::ActiveVariants;

pub const CHECKPOINT_VERSION: u64 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint<S> {
    pub version: u64,
    pub scenario: String,
    pub run_id: String,
    /// Last completed round.
    pub round: u64,
    pub seed: u64,
    pub max_rounds: u64,
    pub params: Value,
    pub variants: ActiveVariants,
    pub state: S,
    pub rng: RngState,
    pub cursor: JournalCursor,
    /// File name of the event log, relative to the checkpoint's directory.
    pub log_file: String,
}

pub fn checkpoint_save<S: Serialize>(path: &Path, checkpoint: &Checkpoint<S>) -> Result<(), RuntimeError> {
    let text = serde_json::to_string(checkpoint).map_err(|e| RuntimeError::Serialization(e.to_string()))?;
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| RuntimeError::io(parent, e))?;
    }
    // Write-then-rename so that a crash never leaves a torn checkpoint.
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, text).map_err(|e| RuntimeError::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| RuntimeError::io(path, e))
}

pub fn checkpoint_load<S: DeserializeOwned>(path: &Path) -> Result<Checkpoint<S>, RuntimeError> {
    let text = std::fs::read_to_string(path).map_err(|e| RuntimeError::io(path, e))?;
    let raw: Value = serde_json::from_str(&text).map_err(|e| RuntimeError::Serialization(e.to_string()))?;
    let found = raw.get("version").and_then(Value::as_u64).unwrap_or(0);
    if found != CHECKPOINT_VERSION {
        return Err(RuntimeError::VersionMismatch {
            found,
            expected: CHECKPOINT_VERSION,
        });
    }
    serde_json::from_value(raw).map_err(|e| RuntimeError::Serialization(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Checkpoint<Vec<f64>> {
        Checkpoint {
            version: CHECKPOINT_VERSION,
            scenario: "firm".into(),
            run_id: "firm-1-00000000".into(),
            round: 0,
            seed: 1,
            max_rounds: 10,
            params: Value::Null,
            variants: ActiveVariants::none(),
            state: vec![2.0, 2.0],
            rng: RngState { seed: 1, counter: 0 },
            cursor: JournalCursor::default(),
            log_file: "run-firm-1-00000000.jsonl".into(),
        }
    }

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.ckpt-0");
        checkpoint_save(&path, &sample()).unwrap();
        assert_eq!(checkpoint_load::<Vec<f64>>(&path).unwrap(), sample());
    }

    #[test]
    fn wrong_version_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.ckpt-0");
        let mut c = sample();
        c.version = 99;
        checkpoint_save(&path, &c).unwrap();
        assert!(matches!(
            checkpoint_load::<Vec<f64>>(&path),
            Err(RuntimeError::VersionMismatch { found: 99, expected: 1 })
        ));
    }
}
