use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("invalid pipeline config: {0}")]
    Invalid(String),
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("cannot parse config: {0}")]
    Parse(String),
}

/// Tunables of the core pipeline. Every field has a default, so an empty
/// YAML or JSON object is a valid config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub line_gap_factor: f64,
    pub block_gap_factor: f64,
    pub min_table_aligned_columns: usize,
    pub abbreviation_list: BTreeSet<String>,
    pub structure_service_url: Option<String>,
    pub render_dpi: u32,
}

pub fn default_abbreviations() -> BTreeSet<String> {
    [
        "Fig", "Eq", "et al", "e.g", "i.e", "vs", "Dr", "No", "Ref", "Tab", "approx", "ca", "wt",
        "at",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect()
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            line_gap_factor: 1.5,
            block_gap_factor: 1.8,
            min_table_aligned_columns: 3,
            abbreviation_list: default_abbreviations(),
            structure_service_url: None,
            render_dpi: 150,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.line_gap_factor) {
            return Err(ConfigError::Invalid("line_gap_factor must be > 0".into()));
        }
        if !positive(self.block_gap_factor) {
            return Err(ConfigError::Invalid("block_gap_factor must be > 0".into()));
        }
        if !(72..=600).contains(&self.render_dpi) {
            return Err(ConfigError::Invalid("render_dpi must be within [72, 600]".into()));
        }
        Ok(())
    }

    /// Parse YAML or JSON text (JSON is accepted by the YAML parser).
    pub fn from_text(text: &str) -> Result<Self, ConfigError> {
        let cfg: PipelineConfig = if text.trim().is_empty() {
            PipelineConfig::default()
        } else {
            serde_yaml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_text(&text)
    }

    /// Lowercase hex SHA-256 of the config's JSON form.
    pub fn config_hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config is plain data");
        hex::encode(Sha256::digest(&json))
    }
}
