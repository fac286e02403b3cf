//! Experiment configuration, read from TOML.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::neural::SizingFormula;
use crate::stat_models::{DelayModel, DropModel, ModelError};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("invalid config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("cannot serialize config: {0}")]
    Serialize(#[from] toml::ser::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// How the network-wide drop model is chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum DropSelection {
    /// Coefficients drawn uniformly from the empirical ranges.
    #[default]
    Random,
    /// A named protocol preset.
    Preset(String),
    /// Explicit drop-form coefficients.
    Coefficients { delta0: f64, delta1: f64 },
    /// The same drop probability on every link, independent of hop count.
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Normalization {
    /// Min-max over the whole dataset before balancing and splitting.
    #[default]
    Full,
    /// Min-max fitted on the training partition only; test values are clipped.
    Train,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DelayParams {
    pub mu: f64,
    pub sigma: f64,
    pub a: f64,
    pub b: f64,
    pub per_hop_delay_ms: f64,
}

impl Default for DelayParams {
    fn default() -> Self {
        let m = DelayModel::default();
        Self { mu: m.mu, sigma: m.sigma, a: m.a, b: m.b, per_hop_delay_ms: m.per_hop_delay_ms }
    }
}

pub const DEFAULT_THETA: f64 = 0.72;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// CSV path; relative paths are resolved against the config file's directory.
    pub dataset_path: PathBuf,
    pub dataset_name: String,
    #[serde(default = "default_true")]
    pub has_header: bool,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub smote: bool,
    #[serde(default = "default_smote_k")]
    pub smote_k: usize,
    #[serde(default)]
    pub normalization: Normalization,
    #[serde(default)]
    pub drop_model: DropSelection,
    /// Wait-window coefficient; ignored when `t_wait` is set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
    /// Explicit normalized wait window.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_wait: Option<f64>,
    /// Overrides the layout's maximum hop count in the wait-window formula.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l_max: Option<u32>,
    #[serde(default)]
    pub delay: DelayParams,
    #[serde(default)]
    pub sizing: SizingFormula,
    #[serde(default = "default_learning_rate")]
    pub learning_rate: f64,
    #[serde(default = "default_momentum")]
    pub momentum: f64,
    #[serde(default = "default_max_epochs")]
    pub max_epochs: usize,
    #[serde(default = "default_patience")]
    pub patience: usize,
    /// Zero drop and zero delay on every link.
    #[serde(default)]
    pub identity_channel: bool,
}

fn default_true() -> bool {
    true
}
fn default_seed() -> u64 {
    1
}
fn default_smote_k() -> usize {
    5
}
fn default_learning_rate() -> f64 {
    0.3
}
fn default_momentum() -> f64 {
    0.8
}
fn default_max_epochs() -> usize {
    500
}
fn default_patience() -> usize {
    5
}

impl ExperimentConfig {
    /// Defaults for everything except the dataset.
    pub fn new(dataset_path: impl Into<PathBuf>, dataset_name: impl Into<String>) -> Self {
        Self {
            dataset_path: dataset_path.into(),
            dataset_name: dataset_name.into(),
            has_header: true,
            seed: default_seed(),
            smote: false,
            smote_k: default_smote_k(),
            normalization: Normalization::Full,
            drop_model: DropSelection::Random,
            theta: None,
            t_wait: None,
            l_max: None,
            delay: DelayParams::default(),
            sizing: SizingFormula::Daqi,
            learning_rate: default_learning_rate(),
            momentum: default_momentum(),
            max_epochs: default_max_epochs(),
            patience: default_patience(),
            identity_channel: false,
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file and resolves a relative dataset path against its directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        let mut cfg = Self::from_toml_str(&text)?;
        if cfg.dataset_path.is_relative() {
            if let Some(dir) = path.parent() {
                cfg.dataset_path = dir.join(&cfg.dataset_path);
            }
        }
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String, ConfigError> {
        Ok(toml::to_string(self)?)
    }

    /// The wait-window coefficient in effect when no explicit `t_wait` is given.
    pub fn effective_theta(&self) -> f64 {
        self.theta.unwrap_or(DEFAULT_THETA)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |m: String| Err(ConfigError::Invalid(m));
        if self.dataset_name.trim().is_empty() {
            return invalid("dataset_name is empty".into());
        }
        if self.theta.is_some() && self.t_wait.is_some() {
            return invalid("set at most one of theta and t_wait".into());
        }
        if let Some(theta) = self.theta {
            if !(theta.is_finite() && theta > 0.0) {
                return invalid(format!("theta must be positive, got {theta}"));
            }
        }
        if let Some(t) = self.t_wait {
            if !(t.is_finite() && t > 0.0) {
                return invalid(format!("t_wait must be positive, got {t}"));
            }
        }
        if self.l_max == Some(0) {
            return invalid("l_max must be at least 1".into());
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return invalid(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return invalid(format!("momentum must be in [0, 1), got {}", self.momentum));
        }
        if self.max_epochs == 0 {
            return invalid("max_epochs must be at least 1".into());
        }
        if self.patience == 0 {
            return invalid("patience must be at least 1".into());
        }
        if self.smote && self.smote_k == 0 {
            return invalid("smote_k must be at least 1".into());
        }
        match &self.drop_model {
            DropSelection::Random => {}
            DropSelection::Preset(name) => {
                if DropModel::preset(name).is_none() {
                    return invalid(format!("unknown drop preset '{name}'"));
                }
            }
            DropSelection::Coefficients { delta0, delta1 } => {
                DropModel::new("custom", *delta0, *delta1)?;
            }
            DropSelection::Fixed(p) => {
                if !(0.0..=1.0).contains(p) {
                    return invalid(format!("fixed drop probability {p} outside [0, 1]"));
                }
            }
        }
        self.base_delay_model()?;
        Ok(())
    }

    /// Delay model with `t_wait` still at its placeholder of 1.
    pub fn base_delay_model(&self) -> Result<DelayModel, ModelError> {
        let d = &self.delay;
        DelayModel::new(d.mu, d.sigma, d.a, d.b, 1.0, d.per_hop_delay_ms)
    }
}
