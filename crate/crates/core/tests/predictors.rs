use std::sync::Arc;
use std::time::Duration;

use layerlab_core::builtin::remote_image::RemoteImagePredictor;
use layerlab_core::builtin::{default_registry, ChatCompletionPredictor, ChatConfig, CHAT};
use layerlab_core::doc::{BBox, Document, Entity, PageInfo, Rect, Span};
use layerlab_core::predict::{
    run_image_predictor, run_text_predictor, run_token_predictor, ImageBox, ImageOutput, ImagePredictor,
    PredictorError, PredictorInstance, RunOptions, SecretResolver, TaggedSpan, TextGenerationPredictor,
    TokenClassificationPredictor,
};
use layerlab_core::render::LayoutRenderer;
use layerlab_fixtures::stubs::{chat_stub, chat_stub_echo, completion, image_stub, user_message};
use proptest::prelude::*;
use serde_json::{json, Value};

/// Document with `n` one-word sentences, paragraphs and tables, one each per word.
fn doc_with(n: usize) -> Document {
    let words: Vec<String> = (0..n).map(|i| format!("W{i}")).collect();
    let text = words.join(" ");
    let mut doc = Document::new(
        "d",
        text,
        vec![PageInfo {
            index: 0,
            width_pts: 612.0,
            height_pts: 792.0,
        }],
    )
    .unwrap();
    let mut at = 0;
    let mut spans = Vec::new();
    for w in &words {
        spans.push(Span::new(at, at + w.len()).unwrap());
        at += w.len() + 1;
    }
    let boxed = |i: usize| BBox::new(0, 0.02 * (i % 40) as f64, 0.02 * (i / 40) as f64, 0.015, 0.015).unwrap();
    let entities = |with_boxes: bool| -> Vec<Entity> {
        spans
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let e = Entity::new(i as u64).with_spans(vec![*s]);
                if with_boxes {
                    e.with_boxes(vec![boxed(i)])
                } else {
                    e
                }
            })
            .collect()
    };
    doc.add_layer("words", entities(true)).unwrap();
    doc.add_layer("lines", vec![Entity::new(0).with_spans(vec![Span::new(0, at - 1).unwrap()])])
        .unwrap();
    doc.add_layer("sentences", entities(false)).unwrap();
    doc.add_layer("paragraphs", entities(false)).unwrap();
    doc.add_layer("tables", entities(true)).unwrap();
    doc
}

fn index_of(text: &str) -> usize {
    text.trim_start_matches('W').parse().unwrap()
}

struct EveryThirdToken;
impl TokenClassificationPredictor for EveryThirdToken {
    fn tag_batch(&self, texts: &[&str]) -> Result<Vec<Vec<TaggedSpan>>, PredictorError> {
        if index_of(texts[0]) % 3 == 2 {
            return Err(PredictorError::Failed("stub failure".into()));
        }
        Ok(texts.iter().map(|t| vec![TaggedSpan::new(0, t.len(), "X")]).collect())
    }
}

struct EveryThirdText;
impl TextGenerationPredictor for EveryThirdText {
    fn generate(&self, text: &str) -> Result<String, PredictorError> {
        if index_of(text) % 3 == 2 {
            return Err(PredictorError::Failed("stub failure".into()));
        }
        Ok(json!({"text": text}).to_string())
    }
}

struct EveryThirdImage;
impl ImagePredictor for EveryThirdImage {
    fn process_image(&self, _: &image::RgbaImage) -> Result<ImageOutput, PredictorError> {
        unreachable!()
    }

    fn process_entity(
        &self,
        doc: &Document,
        entity: &Entity,
        _: &dyn layerlab_core::render::PageRenderer,
        _: u32,
    ) -> Result<ImageOutput, PredictorError> {
        if index_of(&doc.text_of(entity)) % 3 == 2 {
            return Err(PredictorError::Failed("stub failure".into()));
        }
        Ok(ImageOutput {
            raw_text: Some(doc.text_of(entity)),
            ..ImageOutput::default()
        })
    }
}

#[test]
fn failures_on_every_third_input_are_isolated() {
    let opts = RunOptions {
        batch_size: 1,
        ..RunOptions::default()
    };
    let mut doc = doc_with(30);
    let renderer = LayoutRenderer::new(Arc::new(doc.clone()));
    let token = run_token_predictor(&mut doc, "t", &EveryThirdToken, &opts).unwrap();
    let text = run_text_predictor(&mut doc, "g", &EveryThirdText, &opts).unwrap();
    let image = run_image_predictor(&mut doc, "i", &EveryThirdImage, &renderer, &opts).unwrap();
    for out in [&token, &text, &image] {
        assert_eq!(out.produced, 20, "{}", out.layer);
        assert_eq!(out.errors.len(), 10, "{}", out.layer);
        assert_eq!(out.produced + out.errors.len(), 30);
        assert!(out.errors.iter().all(|e| e.entity_id % 3 == 2));
    }
    let parsed = &doc.layer("generated_g").unwrap().entities[0].metadata["parsed"];
    assert_eq!(parsed, &json!({"text": "W0"}));
}

#[test]
fn parallel_workers_give_same_results() {
    let mut a = doc_with(30);
    let mut b = doc_with(30);
    let seq = RunOptions {
        batch_size: 4,
        ..RunOptions::default()
    };
    let par = RunOptions { workers: 4, ..seq.clone() };
    struct Upper;
    impl TokenClassificationPredictor for Upper {
        fn tag_batch(&self, texts: &[&str]) -> Result<Vec<Vec<TaggedSpan>>, PredictorError> {
            Ok(texts.iter().map(|t| vec![TaggedSpan::new(0, 1, t.to_string())]).collect())
        }
    }
    run_token_predictor(&mut a, "u", &Upper, &seq).unwrap();
    run_token_predictor(&mut b, "u", &Upper, &par).unwrap();
    assert_eq!(a, b);
}

/// Returns one box at a fixed crop-relative rectangle.
struct FixedBox(Rect);
impl ImagePredictor for FixedBox {
    fn process_image(&self, _: &image::RgbaImage) -> Result<ImageOutput, PredictorError> {
        Ok(ImageOutput {
            boxes: Some(vec![ImageBox {
                rect: self.0,
                label: "b".into(),
                score: 1.0,
            }]),
            ..ImageOutput::default()
        })
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn crop_boxes_map_back_to_page(
        x in 0.0..0.8f64, y in 0.0..0.8f64, w in 0.01..0.2f64, h in 0.01..0.2f64,
        bx in 0.0..0.5f64, by in 0.0..0.5f64, bw in 0.01..0.5f64, bh in 0.01..0.5f64,
    ) {
        let region = BBox::new(0, x, y, w, h).unwrap();
        let mut doc = Document::new("d", "", doc_with(1).pages).unwrap();
        doc.add_layer("tables", vec![Entity::new(0).with_boxes(vec![region])]).unwrap();
        let renderer = LayoutRenderer::new(Arc::new(doc.clone()));
        let opts = RunOptions { dpi: 72, ..RunOptions::default() };
        let out = run_image_predictor(&mut doc, "f", &FixedBox(Rect::new(bx, by, bw, bh)), &renderer, &opts).unwrap();
        prop_assert_eq!(out.produced, 1);
        let stored: BBox = serde_json::from_value(doc.layer(&out.layer).unwrap().entities[0].metadata["boxes"][0]["box"].clone()).unwrap();
        // Independent oracle: affine map from crop units to page units.
        let expected = [x + bx * w, y + by * h, bw * w, bh * h];
        for (got, want) in [stored.x, stored.y, stored.w, stored.h].into_iter().zip(expected) {
            prop_assert!((got - want).abs() < 1e-9, "{} vs {}", got, want);
        }
    }
}

struct Key(&'static str);
impl SecretResolver for Key {
    fn resolve(&self, var: &str) -> Option<String> {
        (var == "STUB_API_KEY").then(|| self.0.to_string())
    }
}

fn chat_predictor(endpoint: String, template: &str) -> Arc<dyn TextGenerationPredictor> {
    let cfg = json!({
        "endpoint_url": endpoint,
        "model": "stub-model",
        "api_key_env": "STUB_API_KEY",
        "user_prompt_template": template,
        "system_prompt": "sys",
        "timeout_s": 5,
    });
    match default_registry().instantiate(CHAT, cfg.as_object().unwrap(), &Key("sk-stub-123")).unwrap() {
        PredictorInstance::Text(p) => p,
        _ => panic!("chat is a text predictor"),
    }
}

#[test]
fn chat_echo_and_request_shape() {
    let stub = chat_stub_echo();
    let p = chat_predictor(format!("{}/v1", stub.url()), "E: {entity_text}");
    assert_eq!(p.generate("x").unwrap(), "E: x");
    let reqs = stub.requests();
    assert_eq!(reqs.len(), 1);
    assert_eq!(reqs[0].authorization.as_deref(), Some("Bearer sk-stub-123"));
    assert_eq!(
        String::from_utf8(reqs[0].body.clone()).unwrap(),
        r#"{"model":"stub-model","temperature":0.0,"messages":[{"role":"system","content":"sys"},{"role":"user","content":"E: x"}]}"#
    );
    p.generate("x").unwrap();
    let reqs = stub.requests();
    assert_eq!(reqs[0].body, reqs[1].body);
}

#[test]
fn chat_server_errors_retry_once_then_fail() {
    let stub = chat_stub(|_, _| (500, "internal".into()));
    let p = chat_predictor(format!("{}/v1", stub.url()), "{entity_text}");
    let err = p.generate("x").unwrap_err();
    assert!(matches!(err, PredictorError::Http { status: 500, .. }), "{err:?}");
    assert_eq!(stub.requests().len(), 2);

    let mut doc = doc_with(3);
    let out = run_text_predictor(&mut doc, "chat", p.as_ref(), &RunOptions::default()).unwrap();
    assert_eq!((out.produced, out.errors.len()), (0, 3));
    assert!(out.errors[0].message.contains("500"));
}

#[test]
fn chat_recovers_after_one_failure() {
    let stub = chat_stub(|i, req| {
        if i == 0 {
            (503, "busy".into())
        } else {
            (200, completion(&user_message(req)))
        }
    });
    let p = chat_predictor(format!("{}/v1", stub.url()), "{entity_text}");
    assert_eq!(p.generate("ok").unwrap(), "ok");
    let stub = chat_stub(|_, _| (400, "bad request".into()));
    let p = chat_predictor(format!("{}/v1", stub.url()), "{entity_text}");
    assert!(p.generate("x").is_err());
    assert_eq!(stub.requests().len(), 1);
}

#[test]
fn chat_json_body_becomes_record() {
    let stub = chat_stub(|_, _| (200, completion("{\"materials\":[\"SiO2\"]}")));
    let p = chat_predictor(format!("{}/v1", stub.url()), "{entity_text}");
    let mut doc = doc_with(1);
    let out = run_text_predictor(&mut doc, "chat", p.as_ref(), &RunOptions::default()).unwrap();
    let e = &doc.layer(&out.layer).unwrap().entities[0];
    assert_eq!(e.metadata["parsed"], json!({"materials": ["SiO2"]}));
    assert_eq!(e.metadata["parse_error"], Value::Null);
}

#[test]
fn chat_timeout_is_retried_then_reported() {
    let stub = layerlab_fixtures::stubs::chat_stub_fixed("late", Duration::from_millis(1500));
    let p = ChatCompletionPredictor::new(ChatConfig {
        endpoint_url: format!("{}/v1", stub.url()),
        model: "m".into(),
        api_key: "k".into(),
        system_prompt: "s".into(),
        user_prompt_template: "{entity_text}".into(),
        temperature: 0.0,
        timeout_s: 1,
    })
    .unwrap();
    assert_eq!(p.generate("x").unwrap_err(), PredictorError::Timeout);
    assert_eq!(stub.requests().len(), 2);
}

#[test]
fn remote_image_contract() {
    let stub = image_stub(|i, _| match i {
        0 => (200, r#"{"raw_text": "caption"}"#.into()),
        1 => (200, "{}".into()),
        2 => (200, r#"{"boxes": [[0.1, 0.1, 0.5, 0.5, "cell", 0.8]]}"#.into()),
        _ => (502, "gateway".into()),
    });
    let p = RemoteImagePredictor::new(stub.url(), Duration::from_secs(5));
    let img = image::RgbaImage::new(4, 4);
    assert_eq!(p.process_image(&img).unwrap().raw_text.as_deref(), Some("caption"));
    assert!(matches!(p.process_image(&img), Err(PredictorError::InvalidResponse(_))));
    let out = p.process_image(&img).unwrap();
    assert!(out.raw_text.is_none() && out.table.is_none());
    assert_eq!(out.boxes.unwrap()[0].label, "cell");
    assert!(matches!(p.process_image(&img), Err(PredictorError::Http { status: 502, .. })));
    let req = &stub.requests()[0];
    assert!(req.content_type.as_deref().unwrap().starts_with("multipart/form-data"));
    let body = String::from_utf8_lossy(&req.body);
    assert!(body.contains("name=\"image\""));
    assert!(body.contains("image/png"));
}
