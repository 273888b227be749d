//! Predictor interfaces, runners and the predictor registry.

pub mod json;
pub mod plan;
pub mod registry;
pub mod runner;

use image::RgbaImage;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::builtin::table::TableRecord;
use crate::doc::{union_per_page, Document, Entity, Rect};
use crate::render::{crop_image, PageRenderer, RenderError};

pub use json::{extract_first_json_value, postprocess_to_record, JsonError};
pub use plan::{prepare_predictors, PreparedPredictor};
pub use registry::{
    ConfigField, EnvSecrets, FieldType, PredictorConfig, PredictorDescriptor, PredictorInstance,
    PredictorKind, PredictorSpec, Registry, RegistryError, SecretResolver,
};
pub use runner::{
    run_image_predictor, run_predictor, run_text_predictor, run_token_predictor, RunError,
    RunOptions, RunOutcome,
};

/// A label on a sentence-local, half-open char range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaggedSpan {
    pub start: usize,
    pub end: usize,
    pub label: String,
    #[serde(default = "default_score")]
    pub score: f64,
}

fn default_score() -> f64 {
    1.0
}

impl TaggedSpan {
    pub fn new(start: usize, end: usize, label: impl Into<String>) -> Self {
        Self {
            start,
            end,
            label: label.into(),
            score: 1.0,
        }
    }

    /// Check the span against a text of `text_chars` characters.
    pub fn validate(&self, text_chars: usize) -> Result<(), String> {
        if self.start >= self.end {
            return Err(format!("empty or inverted span ({}, {})", self.start, self.end));
        }
        if self.end > text_chars {
            return Err(format!(
                "span ({}, {}) exceeds sentence length {text_chars}",
                self.start, self.end
            ));
        }
        if self.label.is_empty() {
            return Err("empty label".into());
        }
        if !(0.0..=1.0).contains(&self.score) {
            return Err(format!("score {} outside [0, 1]", self.score));
        }
        Ok(())
    }
}

/// System and user messages sent to a text generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationMessage {
    pub system: String,
    pub user: String,
}

pub const ENTITY_TEXT_PLACEHOLDER: &str = "{entity_text}";

impl GenerationMessage {
    pub fn from_template(system: &str, template: &str, entity_text: &str) -> Result<Self, String> {
        let user = template.replacen(ENTITY_TEXT_PLACEHOLDER, entity_text, 1);
        if user.is_empty() {
            return Err("user message is empty".into());
        }
        Ok(Self {
            system: system.to_string(),
            user,
        })
    }
}

/// A box returned by an image predictor. Rect is crop-relative when produced
/// by a predictor.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageBox {
    pub rect: Rect,
    pub label: String,
    pub score: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ImageOutput {
    pub raw_text: Option<String>,
    pub table: Option<TableRecord>,
    pub boxes: Option<Vec<ImageBox>>,
}

impl ImageOutput {
    pub fn validate(&self) -> Result<(), String> {
        if self.raw_text.is_none() && self.table.is_none() && self.boxes.is_none() {
            return Err("image output has no raw_text, table or boxes".into());
        }
        if let Some(table) = &self.table {
            let mut lens = table.values().map(Vec::len);
            if let Some(first) = lens.next() {
                if lens.any(|l| l != first) {
                    return Err("table columns differ in length".into());
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PredictorError {
    #[error("HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("request timed out")]
    Timeout,
    #[error("transport error: {0}")]
    Transport(String),
    #[error("invalid response: {0}")]
    InvalidResponse(String),
    #[error("no table geometry available: {0}")]
    NoGeometry(String),
    #[error("{0}")]
    Failed(String),
}

impl From<RenderError> for PredictorError {
    fn from(e: RenderError) -> Self {
        PredictorError::Failed(format!("rendering failed: {e}"))
    }
}

/// Failure of a predictor on a single entity; recorded, never fatal to a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntityError {
    pub entity_id: u64,
    pub layer: String,
    pub message: String,
    pub predictor: String,
}

pub trait TokenClassificationPredictor: Send + Sync {
    /// Tag each text; the result has one list per input, in order.
    fn tag_batch(&self, texts: &[&str]) -> Result<Vec<Vec<TaggedSpan>>, PredictorError>;
}

pub trait TextGenerationPredictor: Send + Sync {
    fn generate(&self, entity_text: &str) -> Result<String, PredictorError>;

    /// Turn a raw response into a structured record.
    fn postprocess(&self, response: &str) -> Result<Value, String> {
        postprocess_to_record(response)
            .map(Value::Object)
            .map_err(|e| e.to_string())
    }
}

/// The region an image predictor sees for an entity: the union of its boxes
/// on the first page it appears on.
pub fn entity_region(entity: &Entity) -> Option<crate::doc::BBox> {
    union_per_page(&entity.boxes).into_iter().next()
}

pub trait ImagePredictor: Send + Sync {
    fn process_image(&self, image: &RgbaImage) -> Result<ImageOutput, PredictorError>;

    /// Process an entity with access to the whole document. Returned boxes
    /// are relative to [`entity_region`]. The default crops that region at
    /// `dpi` and calls [`ImagePredictor::process_image`].
    fn process_entity(
        &self,
        _doc: &Document,
        entity: &Entity,
        renderer: &dyn PageRenderer,
        dpi: u32,
    ) -> Result<ImageOutput, PredictorError> {
        let region = entity_region(entity)
            .ok_or_else(|| PredictorError::Failed("entity has no boxes".into()))?;
        let page = renderer.render_page(region.page, dpi)?;
        self.process_image(&crop_image(&page, &region))
    }
}
