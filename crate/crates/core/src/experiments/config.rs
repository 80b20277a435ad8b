//! Experiment configuration: a single JSON-serializable struct whose
//! fields mirror the CLI flags one to one. A manifest written after a
//! run embeds the effective config, so feeding the manifest back in
//! reproduces the run bit for bit.

use crate::analytics::{AnalyticProfile, OffspringLaw};
use crate::embedding::{StepLaw, StepLawSpec};
use crate::tree::DEFAULT_TRAP_CAP;
use crate::walker::{default_horizon, default_tail_buffer};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("field `{field}`: {message}")]
    Invalid { field: &'static str, message: String },
    #[error("config parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("cannot read config: {0}")]
    Io(#[from] std::io::Error),
}

fn invalid(field: &'static str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field,
        message: message.into(),
    }
}

/// Offspring law selector: a named preset or explicit probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BaseLaw {
    Named(String),
    Probs(Vec<f64>),
}

impl Default for BaseLaw {
    fn default() -> Self {
        BaseLaw::Named("binary".into())
    }
}

impl BaseLaw {
    pub const KNOWN: &'static [&'static str] = &["binary", "mix13", "bin3"];

    pub fn resolve(&self) -> Result<OffspringLaw, ConfigError> {
        match self {
            BaseLaw::Named(name) => match name.as_str() {
                "binary" => Ok(OffspringLaw::point_mass(2)),
                "mix13" => Ok(OffspringLaw::new(vec![0.0, 0.5, 0.0, 0.5]).expect("valid")),
                "bin3" => {
                    let p = 2.0 / 3.0;
                    let q = 1.0 - p;
                    Ok(OffspringLaw::new(vec![
                        q * q * q,
                        3.0 * p * q * q,
                        3.0 * p * p * q,
                        p * p * p,
                    ])
                    .expect("valid"))
                }
                other => Err(invalid(
                    "base",
                    format!("unknown preset {other:?}; known: {:?} or a probability array", Self::KNOWN),
                )),
            },
            BaseLaw::Probs(probs) => OffspringLaw::new(probs.clone())
                .map_err(|e| invalid("base", e.to_string())),
        }
    }
}

/// One point of a percolation schedule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleEntry {
    pub n: u64,
    pub p: f64,
}

fn default_l_scale() -> f64 {
    10.0
}
fn default_d() -> usize {
    1
}
fn default_replicas() -> usize {
    8
}
fn default_stride() -> u64 {
    64
}
fn default_trap_cap() -> u64 {
    DEFAULT_TRAP_CAP
}

/// Shared experiment configuration; unknown fields are rejected.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub base: BaseLaw,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule: Option<Vec<ScheduleEntry>>,
    /// Level-scale parameter; levels sit every `floor(l_scale/(p-p_c))`
    /// generations.
    #[serde(default = "default_l_scale", rename = "L")]
    pub l_scale: f64,
    #[serde(default = "default_d")]
    pub d: usize,
    #[serde(default)]
    pub step_law: StepLawSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<u64>,
    #[serde(default = "default_replicas")]
    pub replicas: usize,
    #[serde(default)]
    pub master_seed: u64,
    /// Trailing steps treated as censored; defaults to
    /// `max(horizon/10, 10 (p-p_c)^-3)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tail_buffer: Option<u64>,
    #[serde(default = "default_trap_cap")]
    pub trap_cap: u64,
    #[serde(default = "default_stride")]
    pub stride: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depth_cap: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<String>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults are valid")
    }
}

impl ExperimentConfig {
    /// Parse from a JSON string; a run manifest (object with a `config`
    /// field) is accepted too.
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        let config_value = match value.get("config") {
            Some(inner) => inner.clone(),
            None => value,
        };
        let config: ExperimentConfig = serde_json::from_value(config_value)?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_file(path: &std::path::Path) -> Result<Self, ConfigError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.base.resolve()?;
        StepLaw::from_spec(&self.step_law)
            .map_err(|e| invalid("step_law", e.to_string()))?;
        if self.replicas == 0 {
            return Err(invalid("replicas", "must be at least 1"));
        }
        if !(self.l_scale > 0.0) {
            return Err(invalid("L", "must be positive"));
        }
        if self.stride == 0 {
            return Err(invalid("stride", "must be at least 1"));
        }
        if let Some(p) = self.p {
            if !(p > 0.0 && p <= 1.0) {
                return Err(invalid("p", format!("{p} outside (0, 1]")));
            }
        }
        if let Some(schedule) = &self.schedule {
            if schedule.is_empty() {
                return Err(invalid("schedule", "must not be empty"));
            }
            for entry in schedule {
                if !(entry.p > 0.0 && entry.p <= 1.0) {
                    return Err(invalid("schedule", format!("p = {} outside (0, 1]", entry.p)));
                }
                if entry.n == 0 {
                    return Err(invalid("schedule", "n must be positive"));
                }
            }
        }
        Ok(())
    }

    /// Build the supercritical profile for the configured `p`.
    pub fn profile(&self) -> Result<AnalyticProfile, ConfigError> {
        let base = self.base.resolve()?;
        let p = self
            .p
            .ok_or_else(|| invalid("p", "required for this experiment"))?;
        let profile = AnalyticProfile::new(base, p)
            .map_err(|e| invalid("p", e.to_string()))?;
        if !profile.is_supercritical() {
            return Err(invalid(
                "p",
                format!("{} is not above p_c = {}", profile.p, profile.p_c),
            ));
        }
        Ok(profile)
    }

    pub fn step_law(&self) -> StepLaw {
        // The top-level `d` wins over the spec's dimension.
        let spec = StepLawSpec {
            family: self.step_law.family.clone(),
            d: self.d,
        };
        StepLaw::from_spec(&spec).expect("validated")
    }

    pub fn horizon_for(&self, eps: f64) -> u64 {
        self.horizon.unwrap_or_else(|| default_horizon(eps))
    }

    pub fn tail_buffer_for(&self, horizon: u64, eps: f64) -> u64 {
        self.tail_buffer
            .unwrap_or_else(|| default_tail_buffer(horizon, eps))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_gets_defaults() {
        let config = ExperimentConfig::from_json("{}").unwrap();
        assert_eq!(config.l_scale, 10.0);
        assert_eq!(config.base, BaseLaw::Named("binary".into()));
        assert_eq!(config.replicas, 8);
        let horizon = config.horizon_for(0.1);
        assert_eq!(horizon, 1_000_000);
        assert_eq!(config.tail_buffer_for(horizon, 0.1), 100_000);
    }

    #[test]
    fn subcritical_p_is_rejected() {
        let config = ExperimentConfig::from_json(r#"{"p": 0.4}"#).unwrap();
        let err = config.profile().unwrap_err();
        assert!(err.to_string().contains("p_c"), "{err}");
    }

    #[test]
    fn unknown_step_family_lists_known() {
        let err = ExperimentConfig::from_json(r#"{"step_law": {"family": "levy", "d": 1}}"#)
            .unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("step_law"));
        assert!(msg.contains("srw") && msg.contains("cube_uniform"), "{msg}");
    }

    #[test]
    fn base_presets_and_probs() {
        assert_eq!(
            BaseLaw::Named("mix13".into()).resolve().unwrap().probs(),
            &[0.0, 0.5, 0.0, 0.5]
        );
        assert!(BaseLaw::Named("nope".into()).resolve().is_err());
        let explicit = BaseLaw::Probs(vec![0.0, 0.0, 1.0]).resolve().unwrap();
        assert_eq!(explicit.probs(), &[0.0, 0.0, 1.0]);
    }

    #[test]
    fn manifest_round_trip() {
        let config = ExperimentConfig::from_json(r#"{"p": 0.6, "replicas": 3}"#).unwrap();
        let manifest = serde_json::json!({
            "artifact_version": "x",
            "config": serde_json::to_value(&config).unwrap(),
        });
        let back = ExperimentConfig::from_json(&manifest.to_string()).unwrap();
        assert_eq!(back.p, Some(0.6));
        assert_eq!(back.replicas, 3);
    }

    #[test]
    fn unknown_fields_are_rejected() {
        assert!(ExperimentConfig::from_json(r#"{"pp": 0.6}"#).is_err());
    }
}
