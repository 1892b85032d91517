//! Application settings read from one TOML file. Only the API key comes from
//! the environment, under the variable named in `[llm]`.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::AgentConfig;
use crate::baselines::BaselineConfig;
use crate::corpus::SummarizeConfig;
use crate::eval::MetricConfig;
use crate::llm::{Gateway, HttpBackendConfig, SessionSettings};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub bind: String,
    pub port: u16,
    /// Session logs; relative paths resolve against the working directory.
    pub data_dir: PathBuf,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self { bind: "127.0.0.1".into(), port: 8080, data_dir: PathBuf::from("sessions") }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AppConfig {
    pub llm: HttpBackendConfig,
    pub planner: SessionSettings,
    pub utility: SessionSettings,
    pub agent: AgentConfig,
    pub baseline: BaselineConfig,
    pub summarize: SummarizeConfig,
    pub metrics: MetricConfig,
    pub service: ServiceConfig,
    /// Attach summarized discussions to retrieved incidents after ranking.
    pub with_discussions: bool,
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
    #[error("{0}")]
    Invalid(String),
}

impl AppConfig {
    pub fn parse(text: &str, origin: &str) -> Result<Self, ConfigError> {
        let c: AppConfig =
            toml::from_str(text).map_err(|e| ConfigError::Parse { path: origin.into(), message: e.to_string() })?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        Self::parse(&text, &path.display().to_string())
    }

    /// Defaults when `path` is None.
    pub fn load_or_default(path: Option<&Path>) -> Result<Self, ConfigError> {
        path.map_or_else(|| Ok(Self::default()), Self::load)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.agent.validate().map_err(|e| ConfigError::Invalid(format!("agent: {e}")))?;
        self.baseline.validate().map_err(|e| ConfigError::Invalid(format!("baseline: {e}")))?;
        self.metrics.validate().map_err(|e| ConfigError::Invalid(format!("metrics: {e}")))?;
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// HTTP-backed planner and utility sessions.
    pub fn gateway(&self) -> Gateway {
        Gateway::new(Arc::new(self.llm.clone()), self.planner, self.utility)
    }
}
