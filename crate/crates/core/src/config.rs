//! Run configuration files (TOML).
//!
//! ```toml
//! name = "pendulum-45"
//! out_dir = "runs"
//!
//! [train]
//! system = "pendulum"
//! gmm = "pendulum2"      # preset name, or an inline table with weights/means/covariances
//! lambda = 45.0
//!
//! [eval]
//! horizon = 500
//! seeds = [0, 1, 2]
//! ```
//!
//! Every other field has a default; [`RunConfig::resolved_toml`] writes them all out.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::systems::presets;
use crate::training::TrainConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_name")]
    pub name: String,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    pub train: TrainConfig,
    #[serde(default)]
    pub eval: EvalSection,
    #[serde(default)]
    pub sweep: SweepSection,
    #[serde(default)]
    pub landscape: LandscapeSection,
    #[serde(default)]
    pub export: ExportSection,
}

fn default_name() -> String {
    "run".to_string()
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("runs")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSection {
    #[serde(default = "default_eval_horizon")]
    pub horizon: usize,
    #[serde(default = "default_eval_seeds")]
    pub seeds: Vec<u64>,
}

fn default_eval_horizon() -> usize {
    500
}

fn default_eval_seeds() -> Vec<u64> {
    (0..20).collect()
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection { horizon: default_eval_horizon(), seeds: default_eval_seeds() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    #[serde(default = "default_periods")]
    pub periods: Vec<u64>,
    /// Event-trigger thresholds on `‖e‖²`.
    #[serde(default = "default_thresholds")]
    pub thresholds: Vec<f64>,
}

fn default_periods() -> Vec<u64> {
    vec![1, 2, 3]
}

/// Ten thresholds, roughly log-spaced over the range where an event
/// trigger goes from always to rarely firing on the benchmarks.
pub fn default_thresholds() -> Vec<f64> {
    vec![1.0, 2.0, 4.0, 8.0, 12.0, 16.0, 24.0, 32.0, 48.0, 64.0]
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection { periods: default_periods(), thresholds: default_thresholds() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LandscapeSection {
    #[serde(default = "default_num_points")]
    pub num_points: usize,
}

fn default_num_points() -> usize {
    2000
}

impl Default for LandscapeSection {
    fn default() -> Self {
        LandscapeSection { num_points: default_num_points() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExportSection {
    /// Write one trajectory CSV (first evaluation seed) next to evaluation results.
    #[serde(default = "yes")]
    pub trajectory: bool,
    /// Write a checkpoint after every outer iteration rather than only the last.
    #[serde(default = "yes")]
    pub every_iteration: bool,
}

fn yes() -> bool {
    true
}

impl Default for ExportSection {
    fn default() -> Self {
        ExportSection { trajectory: true, every_iteration: true }
    }
}

impl RunConfig {
    pub fn from_train(train: TrainConfig) -> Self {
        RunConfig {
            name: default_name(),
            out_dir: default_out_dir(),
            train,
            eval: EvalSection::default(),
            sweep: SweepSection::default(),
            landscape: LandscapeSection::default(),
            export: ExportSection::default(),
        }
    }

    /// Parses TOML text. `train.gmm` may be a preset name.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let mut value: toml::Table = text.parse().map_err(|e: toml::de::Error| schema_error(&e))?;
        if let Some(toml::Value::Table(train)) = value.get_mut("train") {
            if let Some(toml::Value::String(name)) = train.get("gmm") {
                let params = presets::by_name(name).ok_or_else(|| Error::Config {
                    field: "train.gmm".into(),
                    message: format!("unknown preset `{name}` (known: {})", presets::NAMES.join(", ")),
                })?;
                let inline = toml::Value::try_from(params).map_err(|e| Error::Config {
                    field: "train.gmm".into(),
                    message: e.to_string(),
                })?;
                train.insert("gmm".into(), inline);
            }
        }
        let cfg: RunConfig = value.try_into().map_err(|e: toml::de::Error| schema_error(&e))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate().map_err(|e| match e {
            Error::Config { field, message } => Error::Config { field: format!("train.{field}"), message },
            other => other,
        })?;
        let bad = |field: &str, message: &str| Error::Config { field: field.into(), message: message.into() };
        if self.eval.horizon == 0 {
            return Err(bad("eval.horizon", "must be at least 1"));
        }
        if self.eval.seeds.is_empty() {
            return Err(bad("eval.seeds", "must not be empty"));
        }
        if self.sweep.periods.iter().any(|&p| p == 0) {
            return Err(bad("sweep.periods", "periods must be at least 1"));
        }
        if self.sweep.thresholds.iter().any(|t| !(*t >= 0.0) || !t.is_finite()) {
            return Err(bad("sweep.thresholds", "thresholds must be finite and non-negative"));
        }
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return Err(bad("name", "must be a non-empty single path component"));
        }
        Ok(())
    }

    /// The config with every default written out and the mixture inline.
    pub fn resolved(&self) -> Self {
        RunConfig { train: self.train.resolved(), ..self.clone() }
    }

    pub fn resolved_toml(&self) -> Result<String> {
        toml::to_string(&self.resolved()).map_err(|e| Error::invalid(format!("cannot serialise config: {e}")))
    }
}

fn schema_error(e: &toml::de::Error) -> Error {
    let message = e.message().trim().to_string();
    // serde names the offending key in backticks, e.g. "missing field `lambda`"
    let field = message
        .split('`')
        .nth(1)
        .map(str::to_string)
        .unwrap_or_else(|| "<document>".to_string());
    Error::Config { field, message }
}
