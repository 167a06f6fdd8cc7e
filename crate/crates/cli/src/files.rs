//! Training settings, model files and corpus manifests.

use std::path::Path;

use hybrid_ad_core::automaton::Convergence;
use hybrid_ad_core::datagen::{AnomalySpec, CycleSpec};
use hybrid_ad_core::dbn::DbnConfig;
use hybrid_ad_core::pipeline::{BehaviorModel, LearnSummary, PipelineConfig};
use serde::{de::DeserializeOwned, Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{read_to_string, CliError, Result};

pub const MODEL_FORMAT: &str = "hybrid-ad-model";
pub const MODEL_VERSION: u32 = 1;
pub const MANIFEST_NAME: &str = "manifest.json";

/// Training settings as read from a TOML file. Missing keys take defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSettings {
    pub window_seconds: f64,
    pub overlap: f64,
    pub sample_time: Option<f64>,
    /// Hidden widths, bottom to top.
    pub layers: Vec<usize>,
    pub cd_k: usize,
    pub epochs: usize,
    pub batch_size: usize,
    /// Overrides the per-kind default learning rate of every layer.
    pub lr: Option<f64>,
    pub seed: u64,
    pub convergence: Convergence,
}

impl Default for TrainSettings {
    fn default() -> Self {
        let base = PipelineConfig::default();
        Self {
            window_seconds: base.window_seconds,
            overlap: base.overlap,
            sample_time: None,
            layers: base.dbn.layers.iter().map(|l| l.hidden_units).collect(),
            cd_k: 1,
            epochs: 50,
            batch_size: 32,
            lr: None,
            seed: 0,
            convergence: Convergence::Batch,
        }
    }
}

impl TrainSettings {
    pub fn to_config(&self) -> PipelineConfig {
        let mut dbn = DbnConfig::from_widths(&self.layers);
        for layer in &mut dbn.layers {
            layer.cd_steps = self.cd_k;
            layer.epochs = self.epochs;
            layer.batch_size = self.batch_size;
            if let Some(lr) = self.lr {
                layer.learning_rate = lr;
            }
        }
        PipelineConfig {
            window_seconds: self.window_seconds,
            overlap: self.overlap,
            sample_time: self.sample_time,
            dbn,
            convergence: self.convergence,
            seed: self.seed,
        }
    }
}

pub fn read_toml<T: DeserializeOwned>(path: &Path) -> Result<T> {
    toml::from_str(&read_to_string(path)?).map_err(|e| CliError::parse(path, e))
}

/// Hex SHA-256 of the config's JSON form.
pub fn config_digest(config: &PipelineConfig) -> String {
    let json = serde_json::to_vec(config).expect("config serializes");
    Sha256::digest(&json)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub seed: u64,
    pub config_digest: String,
    pub config: PipelineConfig,
    pub summary: LearnSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format: String,
    pub version: u32,
    #[serde(flatten)]
    pub model: BehaviorModel,
    pub metadata: Metadata,
}

impl ModelFile {
    pub fn new(model: BehaviorModel, config: PipelineConfig, summary: LearnSummary) -> Self {
        Self {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            model,
            metadata: Metadata {
                seed: config.seed,
                config_digest: config_digest(&config),
                config,
                summary,
            },
        }
    }

    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("model serializes");
        text.push('\n');
        text
    }

    pub fn from_json(path: &Path, text: &str) -> Result<Self> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| CliError::parse(path, e))?;
        let format = value.get("format").and_then(|v| v.as_str());
        if format != Some(MODEL_FORMAT) {
            return Err(CliError::parse(path, format!("not a {MODEL_FORMAT} file")));
        }
        match value.get("version").and_then(|v| v.as_u64()) {
            Some(v) if v == u64::from(MODEL_VERSION) => {}
            Some(v) => {
                return Err(CliError::parse(
                    path,
                    format!("model format version {v} is not supported (expected {MODEL_VERSION})"),
                ))
            }
            None => return Err(CliError::parse(path, "missing model format version")),
        }
        serde_json::from_value(value).map_err(|e| CliError::parse(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(path, &read_to_string(path)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub file: String,
    /// `normal`, or the anomaly kind injected into the cycle.
    pub label: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub injected_at: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub spec: CycleSpec,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub anomaly: Option<AnomalySpec>,
    pub cycles: Vec<ManifestEntry>,
}

impl Manifest {
    /// Reads `dir/manifest.json` if present.
    pub fn load(dir: &Path) -> Result<Option<Self>> {
        let path = dir.join(MANIFEST_NAME);
        if !path.exists() {
            return Ok(None);
        }
        let text = read_to_string(&path)?;
        serde_json::from_str(&text)
            .map(Some)
            .map_err(|e| CliError::parse(&path, e))
    }

    pub fn label_of(&self, file_stem: &str) -> Option<&str> {
        self.cycles
            .iter()
            .find(|c| c.file.strip_suffix(".csv") == Some(file_stem))
            .map(|c| c.label.as_str())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn settings_defaults_and_overrides() {
        let s: TrainSettings = toml::from_str("layers = [20, 10]\nlr = 0.05\ncd_k = 2\n").unwrap();
        let cfg = s.to_config();
        assert_eq!(cfg.dbn.code_width(), 10);
        assert!(cfg
            .dbn
            .layers
            .iter()
            .all(|l| l.learning_rate == 0.05 && l.cd_steps == 2));
        assert_eq!(cfg.window_seconds, 3.0);
        assert!(toml::from_str::<TrainSettings>("layer = [3]").is_err());
    }

    #[test]
    fn default_settings_match_pipeline_defaults() {
        assert_eq!(
            TrainSettings::default().to_config(),
            PipelineConfig::default()
        );
    }

    #[test]
    fn digest_tracks_config() {
        let a = PipelineConfig::default();
        let b = PipelineConfig {
            seed: 1,
            ..a.clone()
        };
        assert_eq!(config_digest(&a), config_digest(&a.clone()));
        assert_ne!(config_digest(&a), config_digest(&b));
        assert_eq!(config_digest(&a).len(), 64);
    }
}
