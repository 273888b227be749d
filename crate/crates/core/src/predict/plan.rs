//! Validated predictor runs shared by the service and the CLI.

use std::collections::BTreeMap;

use crate::doc::Document;
use crate::render::PageRenderer;

use super::registry::{PredictorDescriptor, PredictorInstance, PredictorSpec, Registry, RegistryError, SecretResolver};
use super::runner::{run_predictor, RunError, RunOptions, RunOutcome, DEFAULT_BATCH_SIZE};

/// Worker count used for predictors declared safe for concurrent calls.
pub const CONCURRENT_WORKERS: usize = 4;

/// A predictor spec that passed validation, with its instance.
#[derive(Clone)]
pub struct PreparedPredictor {
    pub spec: PredictorSpec,
    pub descriptor: PredictorDescriptor,
    pub instance: PredictorInstance,
}

/// Validate and instantiate every spec. Field errors of spec `i` are keyed
/// `predictors[i].<field>`; all specs are checked before failing.
pub fn prepare_predictors(
    registry: &Registry,
    specs: &[PredictorSpec],
    secrets: &dyn SecretResolver,
) -> Result<Vec<PreparedPredictor>, RegistryError> {
    let mut fields = BTreeMap::new();
    let mut prepared = Vec::new();
    for (i, spec) in specs.iter().enumerate() {
        let prefix = format!("predictors[{i}]");
        if spec.batch_size == Some(0) {
            fields.insert(format!("{prefix}.batch_size"), "must be > 0".to_string());
        }
        match registry.instantiate(&spec.name, &spec.config, secrets) {
            Ok(instance) => prepared.push(PreparedPredictor {
                spec: spec.clone(),
                descriptor: registry.descriptor(&spec.name).expect("instantiated").clone(),
                instance,
            }),
            Err(RegistryError::ConfigValidation { fields: errs }) => {
                for (k, v) in errs {
                    fields.insert(format!("{prefix}.{k}"), v);
                }
            }
            Err(RegistryError::UnknownPredictor(name)) => {
                fields.insert(format!("{prefix}.name"), format!("unknown predictor {name:?}"));
            }
            Err(other) => {
                fields.insert(prefix, other.to_string());
            }
        }
    }
    if fields.is_empty() {
        Ok(prepared)
    } else {
        Err(RegistryError::ConfigValidation { fields })
    }
}

impl PreparedPredictor {
    pub fn options(&self, dpi: u32) -> RunOptions {
        RunOptions {
            target_layer: self.spec.target_layer.clone(),
            batch_size: self.spec.batch_size.unwrap_or(DEFAULT_BATCH_SIZE),
            dpi,
            workers: if self.descriptor.concurrent_safe {
                CONCURRENT_WORKERS
            } else {
                1
            },
        }
    }

    pub fn run(
        &self,
        doc: &mut Document,
        renderer: Option<&dyn PageRenderer>,
        dpi: u32,
    ) -> Result<RunOutcome, RunError> {
        run_predictor(doc, &self.spec.name, &self.instance, renderer, &self.options(dpi))
    }
}
