//! Declarative predictor registry with config validation.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::{ImagePredictor, TextGenerationPredictor, TokenClassificationPredictor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictorKind {
    TokenClassification,
    TextGeneration,
    Image,
}

impl PredictorKind {
    /// Prefix of result layers produced by this kind.
    pub fn layer_prefix(self) -> &'static str {
        match self {
            PredictorKind::TokenClassification => "tagged_",
            PredictorKind::TextGeneration => "generated_",
            PredictorKind::Image => "image_",
        }
    }

    pub fn default_target(self) -> &'static str {
        match self {
            PredictorKind::TokenClassification => "sentences",
            PredictorKind::TextGeneration => "paragraphs",
            PredictorKind::Image => "tables",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldType {
    String,
    Integer,
    Number,
    Boolean,
    Object,
}

impl FieldType {
    fn accepts(self, v: &Value) -> bool {
        match self {
            FieldType::String => v.is_string(),
            FieldType::Integer => v.is_i64() || v.is_u64(),
            FieldType::Number => v.is_number(),
            FieldType::Boolean => v.is_boolean(),
            FieldType::Object => v.is_object(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigField {
    pub name: String,
    #[serde(rename = "type")]
    pub field_type: FieldType,
    pub required: bool,
    /// Secret fields hold the name of an environment variable, never the
    /// secret itself.
    pub secret: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default: Option<Value>,
}

impl ConfigField {
    pub fn required(name: &str, field_type: FieldType) -> Self {
        Self {
            name: name.into(),
            field_type,
            required: true,
            secret: false,
            default: None,
        }
    }

    pub fn optional(name: &str, field_type: FieldType, default: Option<Value>) -> Self {
        Self {
            name: name.into(),
            field_type,
            required: false,
            secret: false,
            default,
        }
    }

    pub fn secret(name: &str) -> Self {
        Self {
            name: name.into(),
            field_type: FieldType::String,
            required: true,
            secret: true,
            default: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictorDescriptor {
    pub name: String,
    pub kind: PredictorKind,
    pub config_schema: Vec<ConfigField>,
    pub description: String,
    pub concurrent_safe: bool,
}

/// A predictor configuration record as accepted by the service and CLI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictorSpec {
    pub name: String,
    #[serde(default)]
    pub config: Map<String, Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_layer: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub batch_size: Option<usize>,
}

/// Resolves environment-variable names to secret values.
pub trait SecretResolver: Send + Sync {
    fn resolve(&self, var: &str) -> Option<String>;
}

/// Reads secrets from the process environment.
pub struct EnvSecrets;

impl SecretResolver for EnvSecrets {
    fn resolve(&self, var: &str) -> Option<String> {
        std::env::var(var).ok().filter(|v| !v.is_empty())
    }
}

/// Validated configuration handed to a factory: plain values with defaults
/// filled in, and secret values resolved separately.
#[derive(Clone, Default)]
pub struct PredictorConfig {
    pub values: Map<String, Value>,
    pub secrets: BTreeMap<String, String>,
}

impl std::fmt::Debug for PredictorConfig {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PredictorConfig")
            .field("values", &self.values)
            .field("secrets", &self.secrets.keys().collect::<Vec<_>>())
            .finish()
    }
}

impl PredictorConfig {
    pub fn str(&self, key: &str) -> Option<&str> {
        self.values.get(key).and_then(Value::as_str)
    }

    pub fn f64(&self, key: &str) -> Option<f64> {
        self.values.get(key).and_then(Value::as_f64)
    }

    pub fn u64(&self, key: &str) -> Option<u64> {
        self.values.get(key).and_then(Value::as_u64)
    }

    pub fn bool(&self, key: &str) -> Option<bool> {
        self.values.get(key).and_then(Value::as_bool)
    }
}

#[derive(Clone)]
pub enum PredictorInstance {
    Token(Arc<dyn TokenClassificationPredictor>),
    Text(Arc<dyn TextGenerationPredictor>),
    Image(Arc<dyn ImagePredictor>),
}

impl PredictorInstance {
    pub fn kind(&self) -> PredictorKind {
        match self {
            PredictorInstance::Token(_) => PredictorKind::TokenClassification,
            PredictorInstance::Text(_) => PredictorKind::TextGeneration,
            PredictorInstance::Image(_) => PredictorKind::Image,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RegistryError {
    #[error("unknown predictor: {0}")]
    UnknownPredictor(String),
    #[error("predictor already registered: {0}")]
    DuplicateName(String),
    #[error("invalid predictor config: {}", format_fields(.fields))]
    ConfigValidation { fields: BTreeMap<String, String> },
    #[error("factory returned a {got:?} predictor for a {declared:?} descriptor")]
    KindMismatch {
        declared: PredictorKind,
        got: PredictorKind,
    },
}

fn format_fields(fields: &BTreeMap<String, String>) -> String {
    fields
        .iter()
        .map(|(k, v)| format!("{k}: {v}"))
        .collect::<Vec<_>>()
        .join("; ")
}

impl RegistryError {
    pub fn field(name: &str, message: impl Into<String>) -> Self {
        RegistryError::ConfigValidation {
            fields: BTreeMap::from([(name.to_string(), message.into())]),
        }
    }
}

pub type Factory =
    Arc<dyn Fn(&PredictorConfig) -> Result<PredictorInstance, RegistryError> + Send + Sync>;

/// Registered predictors in registration order.
#[derive(Clone, Default)]
pub struct Registry {
    entries: Vec<(PredictorDescriptor, Factory)>,
}

impl Registry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(
        &mut self,
        descriptor: PredictorDescriptor,
        factory: Factory,
    ) -> Result<(), RegistryError> {
        if self.descriptor(&descriptor.name).is_some() {
            return Err(RegistryError::DuplicateName(descriptor.name));
        }
        self.entries.push((descriptor, factory));
        Ok(())
    }

    pub fn list_predictors(&self) -> Vec<&PredictorDescriptor> {
        self.entries.iter().map(|(d, _)| d).collect()
    }

    pub fn descriptor(&self, name: &str) -> Option<&PredictorDescriptor> {
        self.entries.iter().find(|(d, _)| d.name == name).map(|(d, _)| d)
    }

    /// Check `config` against the predictor's schema and resolve secrets.
    pub fn validate(
        &self,
        name: &str,
        config: &Map<String, Value>,
        secrets: &dyn SecretResolver,
    ) -> Result<PredictorConfig, RegistryError> {
        let descriptor = self
            .descriptor(name)
            .ok_or_else(|| RegistryError::UnknownPredictor(name.to_string()))?;
        let mut errors = BTreeMap::new();
        for key in config.keys() {
            if !descriptor.config_schema.iter().any(|f| &f.name == key) {
                errors.insert(key.clone(), "unknown field".to_string());
            }
        }
        let mut out = PredictorConfig::default();
        for field in &descriptor.config_schema {
            match config.get(&field.name).filter(|v| !v.is_null()) {
                Some(v) if !field.field_type.accepts(v) => {
                    errors.insert(
                        field.name.clone(),
                        format!("expected {:?}", field.field_type).to_lowercase(),
                    );
                }
                Some(v) => {
                    if field.secret {
                        let var = v.as_str().unwrap_or_default();
                        match secrets.resolve(var) {
                            Some(secret) => {
                                out.secrets.insert(field.name.clone(), secret);
                            }
                            None => {
                                errors.insert(
                                    field.name.clone(),
                                    format!("environment variable {var:?} is not set"),
                                );
                            }
                        }
                    }
                    out.values.insert(field.name.clone(), v.clone());
                }
                None => match &field.default {
                    Some(d) => {
                        out.values.insert(field.name.clone(), d.clone());
                    }
                    None if field.required => {
                        errors.insert(field.name.clone(), "required field missing".to_string());
                    }
                    None => {}
                },
            }
        }
        if errors.is_empty() {
            Ok(out)
        } else {
            Err(RegistryError::ConfigValidation { fields: errors })
        }
    }

    pub fn instantiate(
        &self,
        name: &str,
        config: &Map<String, Value>,
        secrets: &dyn SecretResolver,
    ) -> Result<PredictorInstance, RegistryError> {
        let validated = self.validate(name, config, secrets)?;
        let (descriptor, factory) = self
            .entries
            .iter()
            .find(|(d, _)| d.name == name)
            .expect("validated names are registered");
        let instance = factory(&validated)?;
        if instance.kind() != descriptor.kind {
            return Err(RegistryError::KindMismatch {
                declared: descriptor.kind,
                got: instance.kind(),
            });
        }
        Ok(instance)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::predict::{PredictorError, TaggedSpan};
    use serde_json::json;

    struct Nothing;
    impl TokenClassificationPredictor for Nothing {
        fn tag_batch(&self, texts: &[&str]) -> Result<Vec<Vec<TaggedSpan>>, PredictorError> {
            Ok(vec![Vec::new(); texts.len()])
        }
    }

    struct Fixed(&'static str);
    impl SecretResolver for Fixed {
        fn resolve(&self, var: &str) -> Option<String> {
            (var == self.0).then(|| "s3cret".to_string())
        }
    }

    fn descriptor(name: &str, kind: PredictorKind) -> PredictorDescriptor {
        PredictorDescriptor {
            name: name.into(),
            kind,
            config_schema: vec![
                ConfigField::secret("api_key_env"),
                ConfigField::optional("temperature", FieldType::Number, Some(json!(0.0))),
                ConfigField::required("model", FieldType::String),
            ],
            description: String::new(),
            concurrent_safe: false,
        }
    }

    fn factory() -> Factory {
        Arc::new(|_| Ok(PredictorInstance::Token(Arc::new(Nothing))))
    }

    #[test]
    fn register_list_and_duplicates() {
        let mut r = Registry::new();
        r.register(descriptor("a", PredictorKind::TokenClassification), factory()).unwrap();
        r.register(descriptor("b", PredictorKind::TextGeneration), factory()).unwrap();
        r.register(descriptor("c", PredictorKind::Image), factory()).unwrap();
        let kinds: Vec<_> = r.list_predictors().iter().map(|d| (d.name.as_str(), d.kind)).collect();
        assert_eq!(
            kinds,
            [
                ("a", PredictorKind::TokenClassification),
                ("b", PredictorKind::TextGeneration),
                ("c", PredictorKind::Image)
            ]
        );
        assert_eq!(
            r.register(descriptor("a", PredictorKind::Image), factory()),
            Err(RegistryError::DuplicateName("a".into()))
        );
    }

    #[test]
    fn validation_reports_fields() {
        let mut r = Registry::new();
        r.register(descriptor("a", PredictorKind::TokenClassification), factory()).unwrap();
        let cfg = json!({"temperature": "hot", "bogus": 1});
        let err = r.validate("a", cfg.as_object().unwrap(), &Fixed("KEY")).unwrap_err();
        let RegistryError::ConfigValidation { fields } = err else { panic!() };
        assert_eq!(
            fields.keys().collect::<Vec<_>>(),
            ["api_key_env", "bogus", "model", "temperature"]
        );
        let cfg = json!({"api_key_env": "OTHER", "model": "m"});
        let err = r.validate("a", cfg.as_object().unwrap(), &Fixed("KEY")).unwrap_err();
        assert!(err.to_string().contains("api_key"));
        assert!(matches!(
            r.instantiate("zzz", &Map::new(), &EnvSecrets),
            Err(RegistryError::UnknownPredictor(_))
        ));
    }

    #[test]
    fn secrets_resolved_and_defaults_filled() {
        let mut r = Registry::new();
        r.register(descriptor("a", PredictorKind::TokenClassification), factory()).unwrap();
        let cfg = json!({"api_key_env": "KEY", "model": "m"});
        let v = r.validate("a", cfg.as_object().unwrap(), &Fixed("KEY")).unwrap();
        assert_eq!(v.secrets["api_key_env"], "s3cret");
        assert_eq!(v.values["api_key_env"], "KEY");
        assert_eq!(v.f64("temperature"), Some(0.0));
        assert!(!format!("{v:?}").contains("s3cret"));
        assert!(r.instantiate("a", cfg.as_object().unwrap(), &Fixed("KEY")).is_ok());
    }

    #[test]
    fn kind_mismatch_is_rejected() {
        let mut r = Registry::new();
        r.register(descriptor("img", PredictorKind::Image), factory()).unwrap();
        let cfg = json!({"api_key_env": "KEY", "model": "m"});
        assert!(matches!(
            r.instantiate("img", cfg.as_object().unwrap(), &Fixed("KEY")),
            Err(RegistryError::KindMismatch { .. })
        ));
    }
}
