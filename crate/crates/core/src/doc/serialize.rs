//! Canonical JSON form of a [`Document`].
//!
//! Layers are written in sorted name order and entities in id order, so the
//! same document always serializes to the same bytes.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{DocError, DocMetadata, Document, Entity, PageInfo};

pub const SCHEMA_VERSION: &str = "1.0";

#[derive(Serialize)]
struct DocumentOut<'a> {
    schema_version: &'a str,
    doc_id: &'a str,
    symbols: &'a str,
    pages: &'a [PageInfo],
    layers: BTreeMap<&'a str, &'a [Entity]>,
    metadata: &'a DocMetadata,
}

#[derive(Deserialize)]
struct DocumentIn {
    #[allow(dead_code)]
    schema_version: String,
    doc_id: String,
    symbols: String,
    pages: Vec<PageInfo>,
    #[serde(default)]
    layers: BTreeMap<String, Vec<Entity>>,
    #[serde(default)]
    metadata: DocMetadata,
}

#[derive(Deserialize)]
struct VersionProbe {
    schema_version: Option<String>,
}

pub fn serialize(doc: &Document) -> Vec<u8> {
    let out = DocumentOut {
        schema_version: SCHEMA_VERSION,
        doc_id: &doc.doc_id,
        symbols: doc.symbols(),
        pages: &doc.pages,
        layers: doc
            .layers()
            .map(|l| (l.name.as_str(), l.entities.as_slice()))
            .collect(),
        metadata: &doc.metadata,
    };
    serde_json::to_vec(&out).expect("document values are always representable as JSON")
}

fn malformed(err: serde_json::Error) -> DocError {
    DocError::Malformed {
        line: err.line(),
        column: err.column(),
        message: err.to_string(),
    }
}

pub fn deserialize(bytes: &[u8]) -> Result<Document, DocError> {
    let probe: VersionProbe = serde_json::from_slice(bytes).map_err(malformed)?;
    match probe.schema_version.as_deref() {
        Some(SCHEMA_VERSION) => {}
        other => {
            return Err(DocError::SchemaVersionMismatch {
                found: other.unwrap_or("<missing>").to_string(),
                supported: SCHEMA_VERSION.to_string(),
            })
        }
    }
    let raw: DocumentIn = serde_json::from_slice(bytes).map_err(malformed)?;
    let mut doc = Document::new(raw.doc_id, raw.symbols, raw.pages)?;
    doc.metadata = raw.metadata;
    for (name, entities) in raw.layers {
        doc.add_layer(&name, entities)?;
    }
    Ok(doc)
}
