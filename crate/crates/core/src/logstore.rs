//! Append-only store of modeling rounds.
//!
//! Layout under the store root:
//!
//! ```text
//! rounds/round-000001.json   one immutable document per round
//! index.json                 summaries of every round, rebuilt on open
//! ```
//!
//! Each file is written to a `.tmp` sibling, fsynced and renamed into place,
//! so after a crash a round is either fully present or absent. Leftover
//! `.tmp` files are removed on open.

use std::fs::{self, File};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::ehr::Timestamp;
use crate::model::{EvalReport, ForestConfig};
use crate::sampling::{SampleSet, TransformWarning};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureImportance {
    pub feature: String,
    pub mean_abs_shap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum RoundStatus {
    Complete,
    Failed { code: String, reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRound {
    /// Assigned by [`LogStore::record_round`].
    pub round_id: u64,
    pub created_at: Timestamp,
    pub sample_set: SampleSet,
    pub forest_config: ForestConfig,
    pub split_seed: u64,
    pub test_fraction: f64,
    pub training_fingerprint: String,
    pub status: RoundStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eval: Option<EvalReport>,
    /// Descending by mean |φ|.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shap_summary: Option<Vec<FeatureImportance>>,
    #[serde(default)]
    pub transform_warnings: Vec<TransformWarning>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundSummary {
    pub round_id: u64,
    pub created_at: Timestamp,
    pub n_positives: usize,
    pub n_negatives: usize,
    pub n_features: usize,
    pub status: RoundStatus,
    pub auc: Option<f64>,
    pub accuracy: Option<f64>,
}

impl RoundSummary {
    pub fn of(round: &ModelRound) -> Self {
        RoundSummary {
            round_id: round.round_id,
            created_at: round.created_at,
            n_positives: round.sample_set.positives.len(),
            n_negatives: round.sample_set.negatives.len(),
            n_features: round.sample_set.feature_names.len(),
            status: round.status.clone(),
            auc: round.eval.as_ref().and_then(|e| e.auc),
            accuracy: round.eval.as_ref().map(|e| e.accuracy),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum LogError {
    #[error("round {0} not found")]
    NotFound(u64),
    #[error("storage error at {path}: {source}")]
    Storage { path: PathBuf, source: std::io::Error },
    #[error("corrupt round document {path}: {source}")]
    Corrupt { path: PathBuf, source: serde_json::Error },
}

impl LogError {
    pub fn code(&self) -> &'static str {
        match self {
            LogError::NotFound(_) => "NotFound",
            LogError::Storage { .. } | LogError::Corrupt { .. } => "StorageError",
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> LogError + '_ {
    move |source| LogError::Storage { path: path.to_path_buf(), source }
}

pub struct LogStore {
    root: PathBuf,
    /// Summaries in id order; the lock also serializes writers.
    index: Mutex<Vec<RoundSummary>>,
}

const ROUNDS_DIR: &str = "rounds";
const INDEX_FILE: &str = "index.json";

fn round_file_name(id: u64) -> String {
    format!("round-{id:06}.json")
}

fn parse_round_file_name(name: &str) -> Option<u64> {
    name.strip_prefix("round-")?.strip_suffix(".json")?.parse().ok()
}

/// Writes `bytes` to `path` through a fsynced temporary file and a rename.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), LogError> {
    let tmp = path.with_extension("json.tmp");
    {
        let mut f = File::create(&tmp).map_err(io_err(&tmp))?;
        f.write_all(bytes).map_err(io_err(&tmp))?;
        f.sync_all().map_err(io_err(&tmp))?;
    }
    fs::rename(&tmp, path).map_err(io_err(path))?;
    if let Some(dir) = path.parent() {
        // Persist the directory entry; not every platform allows opening a
        // directory, so failures here are ignored.
        if let Ok(d) = File::open(dir) {
            let _ = d.sync_all();
        }
    }
    Ok(())
}

impl LogStore {
    /// Opens (creating if needed) the store at `root` and rebuilds the index
    /// from the round documents on disk.
    pub fn open(root: impl AsRef<Path>) -> Result<Self, LogError> {
        let root = root.as_ref().to_path_buf();
        let rounds = root.join(ROUNDS_DIR);
        fs::create_dir_all(&rounds).map_err(io_err(&rounds))?;

        let mut ids = Vec::new();
        for entry in fs::read_dir(&rounds).map_err(io_err(&rounds))? {
            let entry = entry.map_err(io_err(&rounds))?;
            let name = entry.file_name().to_string_lossy().into_owned();
            if name.ends_with(".tmp") {
                let _ = fs::remove_file(entry.path());
            } else if let Some(id) = parse_round_file_name(&name) {
                ids.push(id);
            }
        }
        ids.sort_unstable();
        let store = LogStore { root, index: Mutex::new(Vec::new()) };
        let summaries = ids.iter().map(|&id| store.get_round(id).map(|r| RoundSummary::of(&r))).collect::<Result<Vec<_>, _>>()?;
        store.write_index(&summaries)?;
        *store.index.lock().expect("index lock") = summaries;
        Ok(store)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn round_path(&self, id: u64) -> PathBuf {
        self.root.join(ROUNDS_DIR).join(round_file_name(id))
    }

    fn write_index(&self, summaries: &[RoundSummary]) -> Result<(), LogError> {
        let bytes = serde_json::to_vec_pretty(summaries).expect("summaries serialize");
        write_atomic(&self.root.join(INDEX_FILE), &bytes)
    }

    /// Persists `round` under the next id and returns that id. The document
    /// is on disk before this returns.
    pub fn record_round(&self, mut round: ModelRound) -> Result<u64, LogError> {
        let mut index = self.index.lock().expect("index lock");
        let id = index.last().map_or(1, |s| s.round_id + 1);
        round.round_id = id;
        let bytes = serde_json::to_vec_pretty(&round).expect("round serializes");
        write_atomic(&self.round_path(id), &bytes)?;
        index.push(RoundSummary::of(&round));
        self.write_index(&index)?;
        Ok(id)
    }

    pub fn list_rounds(&self) -> Vec<RoundSummary> {
        self.index.lock().expect("index lock").clone()
    }

    pub fn get_round(&self, id: u64) -> Result<ModelRound, LogError> {
        let path = self.round_path(id);
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Err(LogError::NotFound(id)),
            Err(e) => return Err(LogError::Storage { path, source: e }),
        };
        serde_json::from_slice(&bytes).map_err(|source| LogError::Corrupt { path, source })
    }

    pub fn len(&self) -> usize {
        self.index.lock().expect("index lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Confusion, ForestConfig};
    use crate::sampling::{SamplingStrategy, StrategyParams};

    fn round(status: RoundStatus, auc: Option<f64>) -> ModelRound {
        let complete = status == RoundStatus::Complete;
        ModelRound {
            round_id: 0,
            created_at: Timestamp::from_secs(1_600_000_000),
            sample_set: SampleSet {
                positives: vec!["a".into()],
                negatives: vec!["b".into(), "c".into()],
                feature_names: vec!["age".into()],
                strategy: SamplingStrategy::Random,
                strategy_params: StrategyParams::Random,
                rng_seed: 3,
            },
            forest_config: ForestConfig::default(),
            split_seed: 1,
            test_fraction: 0.2,
            training_fingerprint: "ab".repeat(32),
            status,
            eval: complete.then(|| EvalReport {
                auc,
                accuracy: 0.75,
                f1: 0.1 + 0.2,
                confusion: Confusion { true_positive: 1, false_positive: 0, true_negative: 2, false_negative: 1 },
                n_test: 4,
                split_seed: 1,
                split_fraction: 0.2,
            }),
            shap_summary: complete.then(|| vec![FeatureImportance { feature: "age".into(), mean_abs_shap: 1.0 / 3.0 }]),
            transform_warnings: vec![],
        }
    }

    #[test]
    fn record_then_get_is_identical() {
        let dir = tempfile::tempdir().unwrap();
        let store = LogStore::open(dir.path()).unwrap();
        assert!(store.list_rounds().is_empty());
        let r = round(RoundStatus::Complete, Some(0.8123456789012345));
        let id = store.record_round(r.clone()).unwrap();
        let back = store.get_round(id).unwrap();
        assert_eq!(back, ModelRound { round_id: id, ..r });
    }

    #[test]
    fn ids_increase_and_survive_reopen() {
        let dir = tempfile::tempdir().unwrap();
        let store = LogStore::open(dir.path()).unwrap();
        let a = store.record_round(round(RoundStatus::Complete, Some(0.7))).unwrap();
        let b = store
            .record_round(round(RoundStatus::Failed { code: "SingleClassError".into(), reason: "one class".into() }, None))
            .unwrap();
        assert!(b > a);
        drop(store);
        let reopened = LogStore::open(dir.path()).unwrap();
        let list = reopened.list_rounds();
        assert_eq!(list.iter().map(|s| s.round_id).collect::<Vec<_>>(), vec![a, b]);
        assert_eq!(list[0].auc, Some(0.7));
        assert!(matches!(list[1].status, RoundStatus::Failed { .. }));
        assert!(reopened.get_round(b).unwrap().eval.is_none());
        assert_eq!(reopened.record_round(round(RoundStatus::Complete, None)).unwrap(), b + 1);
    }

    #[test]
    fn missing_round_not_found() {
        let dir = tempfile::tempdir().unwrap();
        let store = LogStore::open(dir.path()).unwrap();
        assert!(matches!(store.get_round(7), Err(LogError::NotFound(7))));
    }

    #[test]
    fn torn_write_is_discarded_on_open() {
        let dir = tempfile::tempdir().unwrap();
        let store = LogStore::open(dir.path()).unwrap();
        store.record_round(round(RoundStatus::Complete, Some(0.9))).unwrap();
        drop(store);
        let torn = dir.path().join(ROUNDS_DIR).join("round-000002.json.tmp");
        fs::write(&torn, b"{\"round_id\": 2, \"crea").unwrap();
        let store = LogStore::open(dir.path()).unwrap();
        assert_eq!(store.len(), 1);
        assert!(!torn.exists());
    }
}
