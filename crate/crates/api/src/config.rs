use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub host: String,
    pub port: u16,
    /// Corpus loaded at startup and by `POST /corpus/load` with an empty body.
    pub corpus_path: Option<PathBuf>,
    pub log_dir: PathBuf,
    /// Built web UI, served at `/` when present.
    pub ui_dir: Option<PathBuf>,
    /// Seed used when a request omits its own.
    pub default_seed: u64,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            host: "127.0.0.1".into(),
            port: 8080,
            corpus_path: None,
            log_dir: PathBuf::from("cohortloop-logs"),
            ui_dir: None,
            default_seed: 0,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("invalid config {path}: {source}")]
    Parse { path: PathBuf, source: toml::de::Error },
    #[error("invalid value {value:?} for {var}")]
    Env { var: &'static str, value: String },
}

pub const ENV_HOST: &str = "COHORTLOOP_HOST";
pub const ENV_PORT: &str = "COHORTLOOP_PORT";
pub const ENV_CORPUS: &str = "COHORTLOOP_CORPUS";
pub const ENV_LOG_DIR: &str = "COHORTLOOP_LOG_DIR";
pub const ENV_UI_DIR: &str = "COHORTLOOP_UI_DIR";
pub const ENV_SEED: &str = "COHORTLOOP_SEED";

impl ServiceConfig {
    /// Reads the optional TOML file, then applies `COHORTLOOP_*` overrides
    /// from the process environment.
    pub fn load(path: Option<&Path>) -> Result<Self, ConfigError> {
        let base = match path {
            Some(p) => Self::from_file(p)?,
            None => Self::default(),
        };
        base.with_env(|k| std::env::var(k).ok())
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.into(), source })?;
        toml::from_str(&text).map_err(|source| ConfigError::Parse { path: path.into(), source })
    }

    pub fn with_env(mut self, lookup: impl Fn(&str) -> Option<String>) -> Result<Self, ConfigError> {
        if let Some(v) = lookup(ENV_HOST) {
            self.host = v;
        }
        if let Some(v) = lookup(ENV_PORT) {
            self.port = v.parse().map_err(|_| ConfigError::Env { var: ENV_PORT, value: v })?;
        }
        if let Some(v) = lookup(ENV_CORPUS) {
            self.corpus_path = Some(v.into());
        }
        if let Some(v) = lookup(ENV_LOG_DIR) {
            self.log_dir = v.into();
        }
        if let Some(v) = lookup(ENV_UI_DIR) {
            self.ui_dir = Some(v.into());
        }
        if let Some(v) = lookup(ENV_SEED) {
            self.default_seed = v.parse().map_err(|_| ConfigError::Env { var: ENV_SEED, value: v })?;
        }
        Ok(self)
    }
}
