//! Secrets entered through the API, kept in memory only.

use std::collections::HashMap;
use std::sync::RwLock;

use layerlab_core::predict::{EnvSecrets, PredictorDescriptor, PredictorSpec, SecretResolver};
use serde_json::Value;

/// Resolves variable names registered for inline secrets first, then the
/// process environment.
#[derive(Default)]
pub struct InlineSecrets {
    values: RwLock<HashMap<String, String>>,
}

impl SecretResolver for InlineSecrets {
    fn resolve(&self, var: &str) -> Option<String> {
        self.values
            .read()
            .expect("secrets lock")
            .get(var)
            .cloned()
            .or_else(|| EnvSecrets.resolve(var))
    }
}

/// Config key carrying an inline value for secret field `field`: the field
/// name without its `_env` suffix (`api_key_env` → `api_key`).
pub fn inline_key(field: &str) -> &str {
    field.strip_suffix("_env").unwrap_or(field)
}

impl InlineSecrets {
    /// Move inline secret values out of `spec` into this store, replacing
    /// them with freshly generated variable names. Returns the offending
    /// config key when an inline value is not a non-empty string.
    pub fn absorb(&self, spec: &mut PredictorSpec, descriptor: &PredictorDescriptor) -> Result<(), String> {
        for field in descriptor.config_schema.iter().filter(|f| f.secret) {
            let key = inline_key(&field.name);
            if key == field.name {
                continue;
            }
            let Some(value) = spec.config.remove(key) else { continue };
            match value {
                Value::String(secret) if !secret.is_empty() => {
                    let var = format!("LAYERLAB_INLINE_{}", uuid::Uuid::new_v4().simple()).to_uppercase();
                    self.values.write().expect("secrets lock").insert(var.clone(), secret);
                    spec.config.insert(field.name.clone(), Value::String(var));
                }
                _ => return Err(key.to_string()),
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use layerlab_core::builtin::default_registry;
    use serde_json::json;

    #[test]
    fn inline_key_is_replaced_by_a_variable_name() {
        let registry = default_registry();
        let descriptor = registry.descriptor("chat").unwrap();
        let mut spec: PredictorSpec =
            serde_json::from_value(json!({"name": "chat", "config": {"api_key": "sk-inline"}})).unwrap();
        let secrets = InlineSecrets::default();
        secrets.absorb(&mut spec, descriptor).unwrap();
        assert!(spec.config.get("api_key").is_none());
        let var = spec.config["api_key_env"].as_str().unwrap();
        assert!(var.starts_with("LAYERLAB_INLINE_"));
        assert_eq!(secrets.resolve(var).as_deref(), Some("sk-inline"));
        assert!(!serde_json::to_string(&spec).unwrap().contains("sk-inline"));
    }

    #[test]
    fn non_string_inline_value_is_rejected() {
        let registry = default_registry();
        let mut spec: PredictorSpec =
            serde_json::from_value(json!({"name": "chat", "config": {"api_key": 5}})).unwrap();
        let err = InlineSecrets::default().absorb(&mut spec, registry.descriptor("chat").unwrap());
        assert_eq!(err, Err("api_key".to_string()));
    }
}
