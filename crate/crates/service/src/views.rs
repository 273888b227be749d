//! Aggregated payloads for the overview and annotation views.

use layerlab_core::doc::{union_per_page, BBox, Document, Entity, Span};
use layerlab_core::predict::PredictorKind;
use serde_json::{json, Map, Value};

/// Captions further than this (normalized page height) from a table are not
/// linked to it.
pub const CAPTION_MAX_GAP: f64 = 0.1;

const RESULT_KINDS: [PredictorKind; 3] = [
    PredictorKind::TokenClassification,
    PredictorKind::TextGeneration,
    PredictorKind::Image,
];

/// Kind of a result layer, from its name prefix.
pub fn result_kind(layer: &str) -> Option<PredictorKind> {
    RESULT_KINDS.into_iter().find(|k| layer.starts_with(k.layer_prefix()))
}

fn section(e: &Entity) -> Value {
    e.metadata.get("section").cloned().unwrap_or(Value::Null)
}

fn in_section(e: &Entity, filter: Option<&str>) -> bool {
    filter.is_none_or(|name| e.meta_str("section") == Some(name))
}

fn meta(e: &Entity, key: &str) -> Value {
    e.metadata.get(key).cloned().unwrap_or(Value::Null)
}

/// Section names in document order.
pub fn section_names(doc: &Document) -> Vec<String> {
    doc.layer("sections")
        .map(|l| l.entities.iter().filter_map(|e| e.meta_str("name").map(str::to_string)).collect())
        .unwrap_or_default()
}

/// Nearest caption above or below `region` on the same page, within
/// [`CAPTION_MAX_GAP`]. Ties go to the lower entity id.
pub fn nearest_caption<'d>(doc: &'d Document, region: &BBox) -> Option<&'d Entity> {
    let captions = doc.layer("captions")?;
    let mut best: Option<(f64, &Entity)> = None;
    for c in &captions.entities {
        let Some(cb) = union_per_page(&c.boxes).into_iter().find(|b| b.page == region.page) else {
            continue;
        };
        let gap = if cb.bottom() <= region.y {
            region.y - cb.bottom()
        } else if cb.y >= region.bottom() {
            cb.y - region.bottom()
        } else {
            0.0
        };
        if gap <= CAPTION_MAX_GAP && best.is_none_or(|(g, _)| gap < g) {
            best = Some((gap, c));
        }
    }
    best.map(|(_, c)| c)
}

fn generation_table(doc: &Document, layer: &str, entities: &[&Entity]) -> Value {
    let mut columns: Vec<String> = Vec::new();
    for e in entities {
        if let Some(Value::Object(rec)) = e.metadata.get("parsed") {
            for k in rec.keys() {
                if !columns.contains(k) {
                    columns.push(k.clone());
                }
            }
        }
    }
    let rows: Vec<Value> = entities
        .iter()
        .map(|e| {
            let rec = e.metadata.get("parsed").and_then(Value::as_object);
            let values: Map<String, Value> = columns
                .iter()
                .map(|c| (c.clone(), rec.and_then(|r| r.get(c)).cloned().unwrap_or_else(|| json!(""))))
                .collect();
            json!({
                "entity_id": e.id,
                "section": section(e),
                "values": values,
                "raw_response": meta(e, "raw_response"),
                "parse_error": meta(e, "parse_error"),
                "text": doc.text_of(e),
            })
        })
        .collect();
    json!({"layer": layer, "columns": columns, "rows": rows})
}

/// Overview payload: tagged rows and generation tables (filtered by
/// `section`), and image outputs with linked captions.
pub fn summary(doc: &Document, section_filter: Option<&str>) -> Value {
    let mut tagging = Vec::new();
    let mut generation = Vec::new();
    let mut images = Vec::new();
    for layer in doc.layers() {
        match result_kind(&layer.name) {
            Some(PredictorKind::TokenClassification) => {
                let rows: Vec<Value> = layer
                    .entities
                    .iter()
                    .filter(|e| in_section(e, section_filter))
                    .map(|e| {
                        json!({
                            "layer": layer.name,
                            "entity_id": e.id,
                            "text": doc.text_of(e),
                            "label": meta(e, "label"),
                            "score": meta(e, "score"),
                            "section": section(e),
                        })
                    })
                    .collect();
                tagging.push(json!({"layer": layer.name, "rows": rows}));
            }
            Some(PredictorKind::TextGeneration) => {
                let entities: Vec<&Entity> =
                    layer.entities.iter().filter(|e| in_section(e, section_filter)).collect();
                generation.push(generation_table(doc, &layer.name, &entities));
            }
            Some(PredictorKind::Image) => {
                for e in &layer.entities {
                    let caption = union_per_page(&e.boxes)
                        .first()
                        .and_then(|region| nearest_caption(doc, region))
                        .map(|c| json!({"entity_id": c.id, "text": doc.text_of(c)}));
                    let box_count = e.metadata.get("boxes").and_then(Value::as_array).map_or(0, Vec::len);
                    images.push(json!({
                        "layer": layer.name,
                        "entity_id": e.id,
                        "source_id": meta(e, "source_id"),
                        "section": section(e),
                        "table": meta(e, "table"),
                        "raw_text": meta(e, "raw_text"),
                        "box_count": box_count,
                        "caption": caption,
                    }));
                }
            }
            None => {}
        }
    }
    json!({
        "doc_id": doc.doc_id,
        "section": section_filter,
        "sections": section_names(doc),
        "tagging": tagging,
        "generation": generation,
        "images": images,
    })
}

fn spans_within(inner: &[Span], outer: &[Span]) -> bool {
    !inner.is_empty() && inner.iter().all(|s| outer.iter().any(|o| o.contains(s)))
}

fn boxes_within(inner: &[BBox], outer: &[BBox]) -> bool {
    !inner.is_empty() && inner.iter().all(|b| outer.iter().any(|o| o.contains_box(b)))
}

/// Whether `candidate` falls within `target`: by spans when both have spans,
/// otherwise by boxes.
pub fn falls_within(candidate: &Entity, target: &Entity) -> bool {
    if !candidate.spans.is_empty() && !target.spans.is_empty() {
        spans_within(&candidate.spans, &target.spans)
    } else {
        boxes_within(&candidate.boxes, &target.boxes)
    }
}

fn local_spans(e: &Entity, parent: Option<Span>) -> Value {
    match parent {
        Some(p) => Value::Array(
            e.spans
                .iter()
                .filter(|s| p.contains(s))
                .map(|s| json!([s.start() - p.start(), s.end() - p.start()]))
                .collect(),
        ),
        None => Value::Null,
    }
}

fn entity_json(doc: &Document, e: &Entity, parent: Option<Span>) -> Value {
    json!({
        "id": e.id,
        "text": doc.text_of(e),
        "spans": e.spans,
        "local_spans": local_spans(e, parent),
        "boxes": e.boxes,
        "metadata": e.metadata,
    })
}

/// Annotation payload for one entity: text, sentences and every result
/// entity that falls within it, grouped by result layer.
pub fn annotations(doc: &Document, layer: &str, target: &Entity) -> Value {
    let parent = target.single_span();
    let sentences: Vec<Value> = doc
        .layer("sentences")
        .filter(|_| layer != "sentences")
        .map(|l| {
            l.entities
                .iter()
                .filter(|s| spans_within(&s.spans, &target.spans))
                .map(|s| entity_json(doc, s, parent))
                .collect()
        })
        .unwrap_or_default();
    let mut groups = Vec::new();
    let mut image_outputs = Vec::new();
    for l in doc.layers() {
        let Some(kind) = result_kind(&l.name) else { continue };
        if l.name == layer {
            continue;
        }
        let members: Vec<&Entity> = l.entities.iter().filter(|e| falls_within(e, target)).collect();
        if kind == PredictorKind::Image {
            for e in &members {
                image_outputs.push(json!({
                    "layer": l.name,
                    "entity_id": e.id,
                    "table": meta(e, "table"),
                    "raw_text": meta(e, "raw_text"),
                    "boxes": meta(e, "boxes"),
                    "region": union_per_page(&e.boxes).first(),
                }));
            }
        }
        groups.push(json!({
            "layer": l.name,
            "kind": kind,
            "entities": members.iter().map(|e| entity_json(doc, e, parent)).collect::<Vec<_>>(),
        }));
    }
    json!({
        "doc_id": doc.doc_id,
        "layer": layer,
        "entity": entity_json(doc, target, parent),
        "text": doc.text_of(target),
        "section": section(target),
        "sentences": sentences,
        "groups": groups,
        "image_outputs": image_outputs,
    })
}
