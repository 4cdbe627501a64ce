use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::query::{SnapshotSource, DEFAULT_NGRAM_MAX};

pub const ENV_ADDR: &str = "DEEPSEEK_ADDR";
pub const ENV_INDEX: &str = "DEEPSEEK_INDEX";
pub const ENV_MODEL: &str = "DEEPSEEK_MODEL";

/// Service settings, read from TOML. Every field is optional.
///
/// ```toml
/// addr = "127.0.0.1:8080"
/// index = "data/index.dski"
/// model = "data/model.dskm"
/// default_k = 10
/// max_k = 100
/// ngram_max = 2
/// cors_origins = ["http://localhost:5173"]
/// request_log = true
/// ```
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub addr: String,
    pub index: Option<PathBuf>,
    /// Without a model, queries are projected by the identity.
    pub model: Option<PathBuf>,
    pub default_k: usize,
    pub max_k: usize,
    pub ngram_max: usize,
    /// Allowed browser origins. Empty allows any origin.
    pub cors_origins: Vec<String>,
    /// One JSON object per request on stdout.
    pub request_log: bool,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            addr: "127.0.0.1:8080".into(),
            index: None,
            model: None,
            default_k: 10,
            max_k: 100,
            ngram_max: DEFAULT_NGRAM_MAX,
            cors_origins: Vec::new(),
            request_log: true,
        }
    }
}

impl ServiceConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| Error::Data(format!("config: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = crate::formats::text::read_text(path)?;
        Self::from_toml(&text)
    }

    /// Applies `DEEPSEEK_ADDR`, `DEEPSEEK_INDEX` and `DEEPSEEK_MODEL`.
    pub fn apply_env(&mut self, var: impl Fn(&str) -> Option<String>) {
        if let Some(addr) = var(ENV_ADDR) {
            self.addr = addr;
        }
        if let Some(index) = var(ENV_INDEX) {
            self.index = Some(index.into());
        }
        if let Some(model) = var(ENV_MODEL) {
            self.model = Some(model.into());
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.default_k == 0 || self.default_k > self.max_k {
            return Err(Error::Data(format!(
                "config: need 1 <= default_k ({}) <= max_k ({})",
                self.default_k, self.max_k
            )));
        }
        if self.ngram_max == 0 {
            return Err(Error::Data("config: ngram_max must be at least 1".into()));
        }
        Ok(())
    }

    pub fn source(&self) -> SnapshotSource {
        SnapshotSource {
            index: self.index.clone(),
            model: self.model.clone(),
            ngram_max: self.ngram_max,
        }
    }
}
