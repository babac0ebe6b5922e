use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsl::DEFAULT_THRESHOLD;
use crate::llm::HttpConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading config {path}: {message}")]
    Io { path: String, message: String },
    #[error("parsing config: {0}")]
    Parse(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// Engine settings, loadable from a TOML document whose keys are the field
/// names below plus an optional `[provider]` table for the HTTP backend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvolutionConfig {
    pub population_size: usize,
    pub generations: usize,
    pub elite_count: usize,
    /// Defaults to `population_size / 2`.
    pub pairs_per_gen: Option<usize>,
    pub threshold: f64,
    pub seed: u64,
    pub enable_pir: bool,
    pub enable_pic: bool,
    pub retry_budget: usize,
    pub long_term_window: usize,
    pub llm_call_budget: usize,
    pub init_temperature: f64,
    pub operator_temperature: f64,
    pub max_tokens: u32,
    /// Fraction of rows used for training when the engine is given a full table.
    pub train_fraction: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub provider: Option<HttpConfig>,
}

impl Default for EvolutionConfig {
    fn default() -> Self {
        Self {
            population_size: 10,
            generations: 10,
            elite_count: 2,
            pairs_per_gen: None,
            threshold: DEFAULT_THRESHOLD,
            seed: 0,
            enable_pir: true,
            enable_pic: true,
            retry_budget: 2,
            long_term_window: 5,
            llm_call_budget: 200,
            init_temperature: 0.7,
            operator_temperature: 0.2,
            max_tokens: 1024,
            train_fraction: 0.5,
            provider: None,
        }
    }
}

impl EvolutionConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn pairs(&self) -> usize {
        self.pairs_per_gen.unwrap_or(self.population_size / 2)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let fail = |m: &str| Err(ConfigError::Invalid(m.to_string()));
        if self.population_size < 2 {
            return fail("population_size must be at least 2");
        }
        if self.elite_count >= self.population_size {
            return fail("elite_count must be smaller than population_size");
        }
        if self.pairs() < 1 {
            return fail("pairs_per_gen must be at least 1");
        }
        if !self.threshold.is_finite() {
            return fail("threshold must be finite");
        }
        if !(self.init_temperature >= 0.0 && self.operator_temperature >= 0.0) {
            return fail("temperatures must be >= 0");
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return fail("train_fraction must lie strictly between 0 and 1");
        }
        Ok(())
    }
}
