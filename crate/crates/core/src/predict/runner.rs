//! Application of predictors to documents, producing result layers.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde_json::{json, Value};

use crate::doc::{map_local_span, normalize_layer_name, span_to_boxes, BBox, DocError, Document, Entity, Span};
use crate::render::PageRenderer;

use super::registry::{PredictorInstance, PredictorKind};
use super::{
    entity_region, EntityError, ImageOutput, ImagePredictor, TextGenerationPredictor,
    TokenClassificationPredictor,
};

pub const DEFAULT_BATCH_SIZE: usize = 32;

#[derive(Debug, Clone)]
pub struct RunOptions {
    /// Layer to run on; defaults to the kind's standard target.
    pub target_layer: Option<String>,
    pub batch_size: usize,
    /// Rendering resolution for image predictors.
    pub dpi: u32,
    /// Concurrent calls allowed; only honored for predictors declared safe.
    pub workers: usize,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            target_layer: None,
            batch_size: DEFAULT_BATCH_SIZE,
            dpi: 150,
            workers: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub layer: String,
    pub produced: usize,
    pub errors: Vec<EntityError>,
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("missing layer: {0}")]
    MissingLayer(String),
    #[error("invalid run options: {0}")]
    InvalidOptions(String),
    #[error("image predictors need a page renderer")]
    NoRenderer,
    #[error(transparent)]
    Document(#[from] DocError),
}

/// Apply `f` to every item using up to `workers` threads; results keep input
/// order.
fn map_parallel<T: Sync, R: Send>(items: &[T], workers: usize, f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    if workers <= 1 || items.len() <= 1 {
        return items.iter().map(f).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<R>>> = Mutex::new((0..items.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..workers.min(items.len()) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= items.len() {
                    break;
                }
                let r = f(&items[i]);
                slots.lock().expect("no panics while holding the lock")[i] = Some(r);
            });
        }
    });
    slots
        .into_inner()
        .expect("workers finished")
        .into_iter()
        .map(|r| r.expect("every slot filled"))
        .collect()
}

fn result_layer_name(doc: &Document, kind: PredictorKind, predictor: &str) -> String {
    doc.unique_layer_name(&format!("{}{}", kind.layer_prefix(), normalize_layer_name(predictor)))
}

fn target_entities(doc: &Document, layer: &str) -> Result<Vec<Entity>, RunError> {
    doc.layer(layer)
        .map(|l| l.entities.clone())
        .ok_or_else(|| RunError::MissingLayer(layer.to_string()))
}

fn section_of(e: &Entity) -> Value {
    e.metadata.get("section").cloned().unwrap_or(Value::Null)
}

/// Tag every sentence (or the configured target layer) in batches and add a
/// `tagged_<name>` layer with one entity per tag.
pub fn run_token_predictor(
    doc: &mut Document,
    name: &str,
    predictor: &dyn TokenClassificationPredictor,
    options: &RunOptions,
) -> Result<RunOutcome, RunError> {
    if options.batch_size == 0 {
        return Err(RunError::InvalidOptions("batch_size must be > 0".into()));
    }
    let target = options.target_layer.as_deref().unwrap_or("sentences");
    let sentences = target_entities(doc, target)?;
    let texts: Vec<String> = sentences.iter().map(|s| doc.text_of(s)).collect();
    let batches: Vec<Vec<usize>> = (0..sentences.len())
        .collect::<Vec<_>>()
        .chunks(options.batch_size)
        .map(<[usize]>::to_vec)
        .collect();
    let results = map_parallel(&batches, options.workers, |batch| {
        let refs: Vec<&str> = batch.iter().map(|&i| texts[i].as_str()).collect();
        predictor.tag_batch(&refs)
    });

    let mut errors = Vec::new();
    let mut produced = Vec::new();
    let error = |id: u64, message: String| EntityError {
        entity_id: id,
        layer: target.to_string(),
        message,
        predictor: name.to_string(),
    };
    for (batch, result) in batches.iter().zip(results) {
        let tags = match result {
            Ok(tags) if tags.len() == batch.len() => tags,
            Ok(tags) => {
                let msg = format!("predictor returned {} results for {} inputs", tags.len(), batch.len());
                errors.extend(batch.iter().map(|&i| error(sentences[i].id, msg.clone())));
                continue;
            }
            Err(e) => {
                errors.extend(batch.iter().map(|&i| error(sentences[i].id, e.to_string())));
                continue;
            }
        };
        for (&i, sentence_tags) in batch.iter().zip(tags) {
            let sentence = &sentences[i];
            let len = texts[i].chars().count();
            let mapped: Result<Vec<(Span, _)>, String> = sentence_tags
                .into_iter()
                .map(|t| {
                    t.validate(len)?;
                    let local = Span::new(t.start, t.end).map_err(|e| e.to_string())?;
                    let global = map_local_span(sentence, local).map_err(|e| e.to_string())?;
                    Ok((global, t))
                })
                .collect();
            match mapped {
                Ok(list) => {
                    for (span, t) in list {
                        produced.push((span, t, sentence.id, section_of(sentence)));
                    }
                }
                Err(msg) => errors.push(error(sentence.id, msg)),
            }
        }
    }

    let mut entities = Vec::with_capacity(produced.len());
    for (id, (span, tag, sentence_id, section)) in produced.into_iter().enumerate() {
        entities.push(
            Entity::new(id as u64)
                .with_spans(vec![span])
                .with_boxes(span_to_boxes(doc, span)?)
                .with_meta("label", tag.label)
                .with_meta("score", tag.score)
                .with_meta("sentence_id", sentence_id)
                .with_meta("section", section),
        );
    }
    let layer = result_layer_name(doc, PredictorKind::TokenClassification, name);
    let count = entities.len();
    doc.add_layer(&layer, entities)?;
    Ok(RunOutcome {
        layer,
        produced: count,
        errors,
    })
}

/// Generate text for every entity of the target layer (paragraphs by
/// default) and add a `generated_<name>` layer mirroring the targets.
pub fn run_text_predictor(
    doc: &mut Document,
    name: &str,
    predictor: &dyn TextGenerationPredictor,
    options: &RunOptions,
) -> Result<RunOutcome, RunError> {
    let target = options.target_layer.as_deref().unwrap_or("paragraphs");
    let targets = target_entities(doc, target)?;
    let texts: Vec<String> = targets.iter().map(|e| doc.text_of(e)).collect();
    let indices: Vec<usize> = (0..targets.len()).collect();
    let responses = map_parallel(&indices, options.workers, |&i| {
        if texts[i].trim().is_empty() {
            return Err("entity has no text".to_string());
        }
        predictor.generate(&texts[i]).map_err(|e| e.to_string())
    });

    let mut entities = Vec::new();
    let mut errors = Vec::new();
    for (e, response) in targets.iter().zip(responses) {
        match response {
            Ok(raw) => {
                let (parsed, parse_error) = match predictor.postprocess(&raw) {
                    Ok(v) => (v, Value::Null),
                    Err(msg) => (Value::Null, Value::from(msg)),
                };
                entities.push(
                    Entity::new(e.id)
                        .with_spans(e.spans.clone())
                        .with_boxes(e.boxes.clone())
                        .with_meta("raw_response", raw)
                        .with_meta("parsed", parsed)
                        .with_meta("parse_error", parse_error)
                        .with_meta("section", section_of(e))
                        .with_meta("source_id", e.id),
                );
            }
            Err(message) => errors.push(EntityError {
                entity_id: e.id,
                layer: target.to_string(),
                message,
                predictor: name.to_string(),
            }),
        }
    }
    let layer = result_layer_name(doc, PredictorKind::TextGeneration, name);
    let count = entities.len();
    doc.add_layer(&layer, entities)?;
    Ok(RunOutcome {
        layer,
        produced: count,
        errors,
    })
}

fn output_metadata(output: &ImageOutput, region: &BBox) -> Result<Value, String> {
    output.validate()?;
    let boxes = match &output.boxes {
        None => Value::Null,
        Some(list) => {
            let mut out = Vec::with_capacity(list.len());
            for b in list {
                let r = region.rect().to_outer(&b.rect);
                let page_box = BBox::from_rect(region.page, r)
                    .ok()
                    .or_else(|| BBox::clamped(region.page, r.x, r.y, r.right(), r.bottom()))
                    .ok_or_else(|| format!("box {:?} lies outside the entity region", b.rect))?;
                out.push(json!({"box": page_box, "label": b.label, "score": b.score}));
            }
            Value::Array(out)
        }
    };
    Ok(json!({
        "raw_text": output.raw_text,
        "table": output.table,
        "boxes": boxes,
    }))
}

/// Run an image predictor on every entity of the target layer (tables by
/// default) and add an `image_<name>` layer. Boxes returned relative to the
/// entity region are stored in page coordinates.
pub fn run_image_predictor(
    doc: &mut Document,
    name: &str,
    predictor: &dyn ImagePredictor,
    renderer: &dyn PageRenderer,
    options: &RunOptions,
) -> Result<RunOutcome, RunError> {
    let target = options.target_layer.as_deref().unwrap_or("tables");
    let targets = target_entities(doc, target)?;
    let shared: &Document = doc;
    let results = map_parallel(&targets, options.workers, |e| {
        let region = entity_region(e).ok_or_else(|| "entity has no boxes".to_string())?;
        let output = predictor
            .process_entity(shared, e, renderer, options.dpi)
            .map_err(|err| err.to_string())?;
        output_metadata(&output, &region)
    });

    let mut entities = Vec::new();
    let mut errors = Vec::new();
    for (e, result) in targets.iter().zip(results) {
        match result {
            Ok(Value::Object(mut meta)) => {
                meta.insert("section".into(), section_of(e));
                meta.insert("source_id".into(), json!(e.id));
                let mut entity = Entity::new(e.id)
                    .with_spans(e.spans.clone())
                    .with_boxes(e.boxes.clone());
                entity.metadata = meta;
                entities.push(entity);
            }
            Ok(_) => unreachable!("output metadata is always an object"),
            Err(message) => errors.push(EntityError {
                entity_id: e.id,
                layer: target.to_string(),
                message,
                predictor: name.to_string(),
            }),
        }
    }
    let layer = result_layer_name(doc, PredictorKind::Image, name);
    let count = entities.len();
    doc.add_layer(&layer, entities)?;
    Ok(RunOutcome {
        layer,
        produced: count,
        errors,
    })
}

/// Dispatch to the runner matching the instance's kind.
pub fn run_predictor(
    doc: &mut Document,
    name: &str,
    instance: &PredictorInstance,
    renderer: Option<&dyn PageRenderer>,
    options: &RunOptions,
) -> Result<RunOutcome, RunError> {
    match instance {
        PredictorInstance::Token(p) => run_token_predictor(doc, name, p.as_ref(), options),
        PredictorInstance::Text(p) => run_text_predictor(doc, name, p.as_ref(), options),
        PredictorInstance::Image(p) => {
            let renderer = renderer.ok_or(RunError::NoRenderer)?;
            run_image_predictor(doc, name, p.as_ref(), renderer, options)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::doc::{PageInfo, Rect};
    use crate::predict::{ImageBox, PredictorError, TaggedSpan};
    use image::RgbaImage;

    fn sp(s: usize, e: usize) -> Span {
        Span::new(s, e).unwrap()
    }

    /// Two sentences "Uses ZSM-5 here." and "Then iron."
    fn doc() -> Document {
        let text = "Uses ZSM-5 here. Then iron.";
        let mut d = Document::new(
            "d",
            text,
            vec![PageInfo {
                index: 0,
                width_pts: 612.0,
                height_pts: 792.0,
            }],
        )
        .unwrap();
        let words: Vec<(usize, usize)> = vec![(0, 4), (5, 10), (11, 16), (17, 21), (22, 27)];
        d.add_layer(
            "words",
            words
                .iter()
                .enumerate()
                .map(|(i, &(s, e))| {
                    Entity::new(i as u64)
                        .with_spans(vec![sp(s, e)])
                        .with_boxes(vec![BBox::new(0, 0.1 * i as f64 + 0.05, 0.1, 0.08, 0.02).unwrap()])
                })
                .collect(),
        )
        .unwrap();
        d.add_layer("lines", vec![Entity::new(0).with_spans(vec![sp(0, 27)])]).unwrap();
        d.add_layer(
            "sentences",
            vec![
                Entity::new(0).with_spans(vec![sp(0, 16)]).with_meta("section", "Intro"),
                Entity::new(1).with_spans(vec![sp(17, 27)]).with_meta("section", "Intro"),
            ],
        )
        .unwrap();
        d.add_layer(
            "paragraphs",
            vec![Entity::new(0).with_spans(vec![sp(0, 27)]).with_meta("section", "Intro")],
        )
        .unwrap();
        d.add_layer(
            "tables",
            vec![Entity::new(0).with_boxes(vec![BBox::new(0, 0.1, 0.2, 0.4, 0.2).unwrap()])],
        )
        .unwrap();
        d
    }

    struct Finder(&'static str);
    impl TokenClassificationPredictor for Finder {
        fn tag_batch(&self, texts: &[&str]) -> Result<Vec<Vec<TaggedSpan>>, PredictorError> {
            Ok(texts
                .iter()
                .map(|t| match t.find(self.0) {
                    Some(b) => {
                        let s = t[..b].chars().count();
                        vec![TaggedSpan::new(s, s + self.0.chars().count(), "MATERIAL")]
                    }
                    None => vec![],
                })
                .collect())
        }
    }

    #[test]
    fn token_offsets_map_to_document() {
        let mut d = doc();
        let out = run_token_predictor(&mut d, "Finder", &Finder("iron"), &RunOptions::default()).unwrap();
        assert_eq!(out.layer, "tagged_finder");
        assert_eq!(out.produced, 1);
        let e = &d.layer("tagged_finder").unwrap().entities[0];
        assert_eq!(d.slice(e.spans[0]), "iron");
        assert_eq!(e.metadata["sentence_id"], 1);
        assert_eq!(e.metadata["section"], "Intro");
        assert_eq!(e.boxes.len(), 1);
        // Second run gets a distinct layer.
        let again = run_token_predictor(&mut d, "Finder", &Finder("iron"), &RunOptions::default()).unwrap();
        assert_eq!(again.layer, "tagged_finder_2");
    }

    struct BadOffsets;
    impl TokenClassificationPredictor for BadOffsets {
        fn tag_batch(&self, texts: &[&str]) -> Result<Vec<Vec<TaggedSpan>>, PredictorError> {
            Ok(texts
                .iter()
                .map(|t| {
                    if t.starts_with("Then") {
                        vec![TaggedSpan::new(0, 99, "X")]
                    } else {
                        vec![TaggedSpan::new(0, 4, "X")]
                    }
                })
                .collect())
        }
    }

    #[test]
    fn invalid_tag_is_isolated() {
        let mut d = doc();
        let out = run_token_predictor(&mut d, "bad", &BadOffsets, &RunOptions::default()).unwrap();
        assert_eq!(out.produced, 1);
        assert_eq!(out.errors.len(), 1);
        assert_eq!(out.errors[0].entity_id, 1);
        assert_eq!(out.errors[0].layer, "sentences");
    }

    struct Failing;
    impl TokenClassificationPredictor for Failing {
        fn tag_batch(&self, _: &[&str]) -> Result<Vec<Vec<TaggedSpan>>, PredictorError> {
            Err(PredictorError::Failed("boom".into()))
        }
    }

    #[test]
    fn failed_batch_logs_every_sentence() {
        let mut d = doc();
        let opts = RunOptions {
            batch_size: 1,
            ..RunOptions::default()
        };
        let out = run_token_predictor(&mut d, "f", &Failing, &opts).unwrap();
        assert_eq!(out.errors.len(), 2);
        assert!(d.layer("tagged_f").unwrap().is_empty());
    }

    #[test]
    fn missing_target_layer() {
        let mut d = Document::new("d", "", vec![]).unwrap();
        assert!(matches!(
            run_token_predictor(&mut d, "f", &Failing, &RunOptions::default()),
            Err(RunError::MissingLayer(_))
        ));
    }

    struct Echo;
    impl TextGenerationPredictor for Echo {
        fn generate(&self, text: &str) -> Result<String, PredictorError> {
            Ok(text.to_string())
        }
    }

    #[test]
    fn text_runner_records_parse_failure() {
        let mut d = doc();
        let out = run_text_predictor(&mut d, "echo", &Echo, &RunOptions::default()).unwrap();
        assert_eq!(out.produced, 1);
        let e = &d.layer("generated_echo").unwrap().entities[0];
        assert_eq!(e.metadata["parsed"], Value::Null);
        assert!(e.metadata["parse_error"].is_string());
        assert_eq!(e.metadata["raw_response"], "Uses ZSM-5 here. Then iron.");
        assert_eq!(e.spans, vec![sp(0, 27)]);
    }

    struct QuarterBox;
    impl ImagePredictor for QuarterBox {
        fn process_image(&self, _: &RgbaImage) -> Result<ImageOutput, PredictorError> {
            Ok(ImageOutput {
                boxes: Some(vec![
                    ImageBox {
                        rect: Rect::new(0.5, 0.5, 0.25, 0.25),
                        label: "cell".into(),
                        score: 0.9,
                    },
                    ImageBox {
                        rect: Rect::new(0.0, 0.0, 1.0, 1.0),
                        label: "all".into(),
                        score: 1.0,
                    },
                ]),
                ..ImageOutput::default()
            })
        }
    }

    struct Empty;
    impl ImagePredictor for Empty {
        fn process_image(&self, _: &RgbaImage) -> Result<ImageOutput, PredictorError> {
            Ok(ImageOutput::default())
        }
    }

    #[test]
    fn image_boxes_back_to_page_coordinates() {
        let mut d = doc();
        let renderer = crate::render::LayoutRenderer::new(std::sync::Arc::new(d.clone()));
        let out = run_image_predictor(&mut d, "q", &QuarterBox, &renderer, &RunOptions::default()).unwrap();
        assert_eq!(out.produced, 1);
        let e = &d.layer("image_q").unwrap().entities[0];
        let b: BBox = serde_json::from_value(e.metadata["boxes"][0]["box"].clone()).unwrap();
        for (got, want) in [(b.x, 0.30), (b.y, 0.30), (b.w, 0.10), (b.h, 0.05)] {
            assert!((got - want).abs() < 1e-12);
        }
        let whole: BBox = serde_json::from_value(e.metadata["boxes"][1]["box"].clone()).unwrap();
        assert_eq!(whole, BBox::new(0, 0.1, 0.2, 0.4, 0.2).unwrap());

        let out = run_image_predictor(&mut d, "e", &Empty, &renderer, &RunOptions::default()).unwrap();
        assert_eq!((out.produced, out.errors.len()), (0, 1));
    }

    #[test]
    fn parallel_map_keeps_order() {
        let items: Vec<usize> = (0..50).collect();
        assert_eq!(map_parallel(&items, 4, |i| i * 2), items.iter().map(|i| i * 2).collect::<Vec<_>>());
    }
}
