//! Layered document representation.
//!
//! A [`Document`] holds one canonical text string (the *symbols*), the page
//! geometry, and any number of named [`Layer`]s of [`Entity`] values. Entities
//! point into the symbols with character [`Span`]s and onto pages with
//! normalized [`BBox`]es. Layers are append-only: processing stages and
//! predictors add new layers but never rewrite existing ones.

mod geometry;
mod query;
mod serialize;

use std::collections::BTreeMap;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use serde_json::Value;

pub use geometry::{union_per_page, BBox, Rect, Span, BOX_EPSILON};
pub use query::{entity_at_position, span_to_boxes};
pub use serialize::{deserialize, serialize, SCHEMA_VERSION};

/// Free-form metadata record attached to entities.
pub type Metadata = serde_json::Map<String, Value>;

#[derive(Debug, thiserror::Error)]
pub enum DocError {
    #[error("invalid span [{start}, {end})")]
    InvalidSpan { start: usize, end: usize },
    #[error("invalid box {0:?}")]
    InvalidBox(BBox),
    #[error("layer `{0}` already exists")]
    DuplicateLayer(String),
    #[error("invalid layer name `{0}` (expected [a-z0-9_]+)")]
    InvalidLayerName(String),
    #[error("layer `{0}` does not exist")]
    MissingLayer(String),
    #[error("duplicate entity id {id} in layer `{layer}`")]
    DuplicateEntityId { layer: String, id: u64 },
    #[error("entity {id} in layer `{layer}` is out of bounds: {reason}")]
    EntityOutOfBounds { layer: String, id: u64, reason: String },
    #[error("entity {id} in layer `{layer}` is invalid: {reason}")]
    InvalidEntity { layer: String, id: u64, reason: String },
    #[error("parent entity has {0} spans; exactly one is required")]
    MultiSpanParent(usize),
    #[error("local span [{start}, {end}) exceeds parent length {parent_len}")]
    LocalSpanOutOfRange {
        start: usize,
        end: usize,
        parent_len: usize,
    },
    #[error("invalid page table: {0}")]
    InvalidPages(String),
    #[error("unsupported schema version `{found}` (supported: `{supported}`)")]
    SchemaVersionMismatch { found: String, supported: String },
    #[error("malformed document at line {line}, column {column}: {message}")]
    Malformed {
        line: usize,
        column: usize,
        message: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Entity {
    pub id: u64,
    #[serde(default)]
    pub spans: Vec<Span>,
    #[serde(default)]
    pub boxes: Vec<BBox>,
    #[serde(default)]
    pub metadata: Metadata,
}

impl Entity {
    pub fn new(id: u64) -> Self {
        Self {
            id,
            spans: Vec::new(),
            boxes: Vec::new(),
            metadata: Metadata::new(),
        }
    }

    pub fn with_spans(mut self, spans: Vec<Span>) -> Self {
        self.spans = spans;
        self
    }

    pub fn with_boxes(mut self, boxes: Vec<BBox>) -> Self {
        self.boxes = boxes;
        self
    }

    pub fn with_meta(mut self, key: &str, value: impl Into<Value>) -> Self {
        self.metadata.insert(key.to_string(), value.into());
        self
    }

    pub fn meta_str(&self, key: &str) -> Option<&str> {
        self.metadata.get(key).and_then(Value::as_str)
    }

    /// The single span of this entity, if it has exactly one.
    pub fn single_span(&self) -> Option<Span> {
        match self.spans.as_slice() {
            [s] => Some(*s),
            _ => None,
        }
    }

    /// Smallest span covering every span of the entity.
    pub fn covering_span(&self) -> Option<Span> {
        let first = self.spans.first()?;
        let last = self.spans.last()?;
        Span::new(first.start(), last.end()).ok()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub name: String,
    pub entities: Vec<Entity>,
}

impl Layer {
    pub fn get(&self, id: u64) -> Option<&Entity> {
        self.entities
            .binary_search_by_key(&id, |e| e.id)
            .ok()
            .map(|i| &self.entities[i])
    }

    pub fn len(&self) -> usize {
        self.entities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entities.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PageInfo {
    pub index: u32,
    pub width_pts: f64,
    pub height_pts: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DocMetadata {
    #[serde(default)]
    pub source_filename: String,
    #[serde(default)]
    pub pipeline_config_hash: String,
    #[serde(default)]
    pub warnings: Vec<String>,
    #[serde(flatten)]
    pub extra: Metadata,
}

/// Whether `name` is a normalized layer name (`[a-z0-9_]+`).
pub fn is_valid_layer_name(name: &str) -> bool {
    !name.is_empty()
        && name
            .bytes()
            .all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'_')
}

/// Lowercase `raw` and replace every character outside `[a-z0-9_]` with `_`.
pub fn normalize_layer_name(raw: &str) -> String {
    let s: String = raw
        .chars()
        .map(|c| {
            let c = c.to_ascii_lowercase();
            if c.is_ascii_lowercase() || c.is_ascii_digit() {
                c
            } else {
                '_'
            }
        })
        .collect();
    if s.is_empty() {
        "_".to_string()
    } else {
        s
    }
}

#[derive(Debug, Clone)]
pub struct Document {
    pub doc_id: String,
    symbols: String,
    pub pages: Vec<PageInfo>,
    layers: BTreeMap<String, Layer>,
    pub metadata: DocMetadata,
    char_offsets: OnceLock<Vec<usize>>,
}

impl PartialEq for Document {
    fn eq(&self, other: &Self) -> bool {
        self.doc_id == other.doc_id
            && self.symbols == other.symbols
            && self.pages == other.pages
            && self.layers == other.layers
            && self.metadata == other.metadata
    }
}

impl Document {
    pub fn new(
        doc_id: impl Into<String>,
        symbols: impl Into<String>,
        pages: Vec<PageInfo>,
    ) -> Result<Self, DocError> {
        for (i, p) in pages.iter().enumerate() {
            if p.index as usize != i {
                return Err(DocError::InvalidPages(format!(
                    "page at position {i} has index {}",
                    p.index
                )));
            }
            let valid = |v: f64| v.is_finite() && v > 0.0;
            if !valid(p.width_pts) || !valid(p.height_pts) {
                return Err(DocError::InvalidPages(format!(
                    "page {i} has non-positive size"
                )));
            }
        }
        Ok(Self {
            doc_id: doc_id.into(),
            symbols: symbols.into(),
            pages,
            layers: BTreeMap::new(),
            metadata: DocMetadata::default(),
            char_offsets: OnceLock::new(),
        })
    }

    pub fn symbols(&self) -> &str {
        &self.symbols
    }

    /// Length of the symbols in characters.
    pub fn char_len(&self) -> usize {
        self.offsets().len() - 1
    }

    fn offsets(&self) -> &[usize] {
        self.char_offsets.get_or_init(|| {
            let mut v: Vec<usize> = self.symbols.char_indices().map(|(i, _)| i).collect();
            v.push(self.symbols.len());
            v
        })
    }

    /// The symbols covered by `span`. Spans past the end are truncated.
    pub fn slice(&self, span: Span) -> &str {
        let offsets = self.offsets();
        let last = offsets.len() - 1;
        let start = offsets[span.start().min(last)];
        let end = offsets[span.end().min(last)];
        &self.symbols[start..end]
    }

    /// Text of an entity: its span slices joined by a single space.
    pub fn text_of(&self, entity: &Entity) -> String {
        let parts: Vec<&str> = entity.spans.iter().map(|s| self.slice(*s)).collect();
        parts.join(" ")
    }

    pub fn layer(&self, name: &str) -> Option<&Layer> {
        self.layers.get(name)
    }

    pub fn require_layer(&self, name: &str) -> Result<&Layer, DocError> {
        self.layers
            .get(name)
            .ok_or_else(|| DocError::MissingLayer(name.to_string()))
    }

    pub fn has_layer(&self, name: &str) -> bool {
        self.layers.contains_key(name)
    }

    /// Layer names in sorted order.
    pub fn layer_names(&self) -> impl Iterator<Item = &str> {
        self.layers.keys().map(String::as_str)
    }

    pub fn layers(&self) -> impl Iterator<Item = &Layer> {
        self.layers.values()
    }

    /// Add a new layer. Entities are validated against the symbols and pages
    /// and stored in id order.
    pub fn add_layer(&mut self, name: &str, mut entities: Vec<Entity>) -> Result<(), DocError> {
        if !is_valid_layer_name(name) {
            return Err(DocError::InvalidLayerName(name.to_string()));
        }
        if self.layers.contains_key(name) {
            return Err(DocError::DuplicateLayer(name.to_string()));
        }
        entities.sort_by_key(|e| e.id);
        for pair in entities.windows(2) {
            if pair[0].id == pair[1].id {
                return Err(DocError::DuplicateEntityId {
                    layer: name.to_string(),
                    id: pair[0].id,
                });
            }
        }
        for e in &entities {
            self.check_entity(name, e)?;
        }
        self.layers.insert(
            name.to_string(),
            Layer {
                name: name.to_string(),
                entities,
            },
        );
        Ok(())
    }

    fn check_entity(&self, layer: &str, e: &Entity) -> Result<(), DocError> {
        let invalid = |reason: String| DocError::InvalidEntity {
            layer: layer.to_string(),
            id: e.id,
            reason,
        };
        let out_of_bounds = |reason: String| DocError::EntityOutOfBounds {
            layer: layer.to_string(),
            id: e.id,
            reason,
        };
        if e.spans.is_empty() && e.boxes.is_empty() {
            return Err(invalid("entity has neither spans nor boxes".into()));
        }
        for pair in e.spans.windows(2) {
            if pair[1].start() < pair[0].end() {
                return Err(invalid(format!(
                    "spans {:?} and {:?} are unsorted or overlapping",
                    pair[0], pair[1]
                )));
            }
        }
        let len = self.char_len();
        if let Some(s) = e.spans.iter().find(|s| s.end() > len) {
            return Err(out_of_bounds(format!(
                "span [{}, {}) exceeds symbols length {len}",
                s.start(),
                s.end()
            )));
        }
        for b in &e.boxes {
            b.check().map_err(|err| invalid(err.to_string()))?;
            if b.page as usize >= self.pages.len() {
                return Err(out_of_bounds(format!(
                    "box page {} beyond page count {}",
                    b.page,
                    self.pages.len()
                )));
            }
        }
        Ok(())
    }

    /// Pick a free layer name: `base`, then `base_2`, `base_3`, ...
    pub fn unique_layer_name(&self, base: &str) -> String {
        if !self.has_layer(base) {
            return base.to_string();
        }
        (2..)
            .map(|n| format!("{base}_{n}"))
            .find(|candidate| !self.has_layer(candidate))
            .expect("unbounded counter")
    }
}

/// Map a span local to `parent`'s text onto document coordinates.
pub fn map_local_span(parent: &Entity, local: Span) -> Result<Span, DocError> {
    let span = parent
        .single_span()
        .ok_or(DocError::MultiSpanParent(parent.spans.len()))?;
    if local.end() > span.len() {
        return Err(DocError::LocalSpanOutOfRange {
            start: local.start(),
            end: local.end(),
            parent_len: span.len(),
        });
    }
    Span::new(span.start() + local.start(), span.start() + local.end())
}
