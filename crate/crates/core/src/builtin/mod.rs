//! Reference predictors and the default registry.

pub mod chat;
pub mod gazetteer;
pub mod geometric;
pub mod remote_image;
pub mod table;

use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use serde_json::json;

use crate::pipeline::RegionHints;
use crate::predict::{
    ConfigField, FieldType, PredictorConfig, PredictorDescriptor, PredictorInstance, PredictorKind,
    Registry, RegistryError,
};

pub use chat::{ChatCompletionPredictor, ChatConfig};
pub use gazetteer::{GazetteerTagger, LexiconEntry};
pub use geometric::GeometricTableParser;
pub use remote_image::RemoteImagePredictor;

pub const GAZETTEER: &str = "gazetteer";
pub const CHAT: &str = "chat";
pub const GEOMETRIC_TABLE: &str = "geometric-table";
pub const REMOTE_IMAGE: &str = "remote-image";
pub const DEFAULT_TIMEOUT_S: u64 = 60;

fn timeout(config: &PredictorConfig) -> Duration {
    Duration::from_secs(config.u64("timeout_s").unwrap_or(DEFAULT_TIMEOUT_S).max(1))
}

fn gazetteer(config: &PredictorConfig) -> Result<PredictorInstance, RegistryError> {
    let tagger = match (config.str("lexicon"), config.str("lexicon_path")) {
        (Some(_), Some(_)) => {
            return Err(RegistryError::field("lexicon", "give either lexicon or lexicon_path, not both"))
        }
        (Some(text), None) => GazetteerTagger::from_tsv(text).map_err(|e| RegistryError::field("lexicon", e.to_string()))?,
        (None, Some(path)) => GazetteerTagger::from_path(Path::new(path))
            .map_err(|e| RegistryError::field("lexicon_path", e.to_string()))?,
        (None, None) => GazetteerTagger::from_tsv(gazetteer::DEFAULT_LEXICON).expect("default lexicon parses"),
    };
    Ok(PredictorInstance::Token(Arc::new(tagger)))
}

fn chat(config: &PredictorConfig) -> Result<PredictorInstance, RegistryError> {
    let api_key = config
        .secrets
        .get("api_key_env")
        .cloned()
        .ok_or_else(|| RegistryError::field("api_key_env", "API key not available"))?;
    let cfg = ChatConfig {
        endpoint_url: config.str("endpoint_url").unwrap_or_default().to_string(),
        model: config.str("model").unwrap_or_default().to_string(),
        api_key,
        system_prompt: config.str("system_prompt").unwrap_or(chat::DEFAULT_SYSTEM_PROMPT).to_string(),
        user_prompt_template: config
            .str("user_prompt_template")
            .unwrap_or(chat::DEFAULT_USER_TEMPLATE)
            .to_string(),
        temperature: config.f64("temperature").unwrap_or(0.0),
        timeout_s: config.u64("timeout_s").unwrap_or(DEFAULT_TIMEOUT_S),
    };
    let predictor = ChatCompletionPredictor::new(cfg).map_err(|msg| {
        let field = if msg.contains("user_prompt_template") {
            "user_prompt_template"
        } else if msg.contains("temperature") {
            "temperature"
        } else if msg.contains("timeout") {
            "timeout_s"
        } else {
            "endpoint_url"
        };
        RegistryError::field(field, msg)
    })?;
    Ok(PredictorInstance::Text(Arc::new(predictor)))
}

fn geometric_table(config: &PredictorConfig) -> Result<PredictorInstance, RegistryError> {
    let hints = match config.str("regions_path") {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| RegistryError::field("regions_path", format!("cannot read {path}: {e}")))?;
            Some(RegionHints::from_json(&text).map_err(|e| RegistryError::field("regions_path", e.to_string()))?)
        }
        None => None,
    };
    let detector = config
        .str("detection_url")
        .map(|url| RemoteImagePredictor::new(url, timeout(config)));
    Ok(PredictorInstance::Image(Arc::new(GeometricTableParser::new(hints, detector))))
}

fn remote_image(config: &PredictorConfig) -> Result<PredictorInstance, RegistryError> {
    let url = config.str("url").unwrap_or_default();
    if url.is_empty() {
        return Err(RegistryError::field("url", "must not be empty"));
    }
    Ok(PredictorInstance::Image(Arc::new(RemoteImagePredictor::new(url, timeout(config)))))
}

/// Registry holding the built-in predictors.
pub fn default_registry() -> Registry {
    let timeout_field = || ConfigField::optional("timeout_s", FieldType::Integer, Some(json!(DEFAULT_TIMEOUT_S)));
    let mut registry = Registry::new();
    registry
        .register(
            PredictorDescriptor {
                name: GAZETTEER.into(),
                kind: PredictorKind::TokenClassification,
                config_schema: vec![
                    ConfigField::optional("lexicon_path", FieldType::String, None),
                    ConfigField::optional("lexicon", FieldType::String, None),
                ],
                description: "Tags lexicon terms (TSV: surface, label, flags) in sentences.".into(),
                concurrent_safe: true,
            },
            Arc::new(gazetteer),
        )
        .expect("unique name");
    registry
        .register(
            PredictorDescriptor {
                name: CHAT.into(),
                kind: PredictorKind::TextGeneration,
                config_schema: vec![
                    ConfigField::required("endpoint_url", FieldType::String),
                    ConfigField::required("model", FieldType::String),
                    ConfigField::secret("api_key_env"),
                    ConfigField::optional("system_prompt", FieldType::String, Some(json!(chat::DEFAULT_SYSTEM_PROMPT))),
                    ConfigField::optional(
                        "user_prompt_template",
                        FieldType::String,
                        Some(json!(chat::DEFAULT_USER_TEMPLATE)),
                    ),
                    ConfigField::optional("temperature", FieldType::Number, Some(json!(0.0))),
                    timeout_field(),
                ],
                description: "Sends entity text to an OpenAI-compatible chat-completion endpoint.".into(),
                concurrent_safe: false,
            },
            Arc::new(chat),
        )
        .expect("unique name");
    registry
        .register(
            PredictorDescriptor {
                name: GEOMETRIC_TABLE.into(),
                kind: PredictorKind::Image,
                config_schema: vec![
                    ConfigField::optional("regions_path", FieldType::String, None),
                    ConfigField::optional("detection_url", FieldType::String, None),
                    timeout_field(),
                ],
                description: "Parses tables by assigning document words to cell geometry.".into(),
                concurrent_safe: true,
            },
            Arc::new(geometric_table),
        )
        .expect("unique name");
    registry
        .register(
            PredictorDescriptor {
                name: REMOTE_IMAGE.into(),
                kind: PredictorKind::Image,
                config_schema: vec![ConfigField::required("url", FieldType::String), timeout_field()],
                description: "Sends entity crops to an image service speaking the layerlab schema.".into(),
                concurrent_safe: false,
            },
            Arc::new(remote_image),
        )
        .expect("unique name");
    registry
}
