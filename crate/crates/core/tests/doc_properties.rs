use layerlab_core::doc::{
    deserialize, entity_at_position, map_local_span, serialize, span_to_boxes, BBox, DocMetadata, Document,
    Entity, PageInfo, Span,
};
use layerlab_fixtures::oracles::random_text;
use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde_json::json;

fn pages(n: usize) -> Vec<PageInfo> {
    (0..n)
        .map(|i| PageInfo {
            index: i as u32,
            width_pts: 612.0,
            height_pts: 792.0,
        })
        .collect()
}

fn random_box(rng: &mut StdRng, n_pages: usize) -> BBox {
    let w = rng.random_range(0.0..0.5);
    let h = rng.random_range(0.0..0.5);
    BBox::new(
        rng.random_range(0..n_pages as u32),
        rng.random_range(0.0..1.0 - w),
        rng.random_range(0.0..1.0 - h),
        w,
        h,
    )
    .unwrap()
}

fn random_spans(rng: &mut StdRng, len: usize) -> Vec<Span> {
    let mut cuts: Vec<usize> = (0..rng.random_range(0..6)).map(|_| rng.random_range(0..=len)).collect();
    cuts.sort();
    cuts.dedup();
    cuts.chunks_exact(2).map(|p| Span::new(p[0], p[1]).unwrap()).collect()
}

fn random_document(seed: u64) -> Document {
    let mut rng = StdRng::seed_from_u64(seed);
    let text = random_text(&mut rng, 200);
    let len = text.chars().count();
    let n_pages = rng.random_range(1..4);
    let mut doc = Document::new(format!("{seed:064x}"), text, pages(n_pages)).unwrap();
    doc.metadata = DocMetadata {
        source_filename: "x.pdf".into(),
        pipeline_config_hash: format!("{:x}", rng.random::<u64>()),
        warnings: (0..rng.random_range(0..3)).map(|i| format!("w{i}")).collect(),
        extra: Default::default(),
    };
    for l in 0..rng.random_range(0..5) {
        let mut entities = Vec::new();
        for id in 0..rng.random_range(0..20u64) {
            let spans = random_spans(&mut rng, len);
            let boxes: Vec<BBox> = (0..rng.random_range(0..3)).map(|_| random_box(&mut rng, n_pages)).collect();
            if spans.is_empty() && boxes.is_empty() {
                continue;
            }
            let meta_value = match rng.random_range(0..5) {
                0 => json!(rng.random::<f64>()),
                1 => json!("é→😀"),
                2 => json!({"nested": [1, 2.5, null, true]}),
                3 => json!(rng.random_range(-5i64..5)),
                _ => json!(null),
            };
            entities.push(
                Entity::new(id * 3 + 1)
                    .with_spans(spans)
                    .with_boxes(boxes)
                    .with_meta("value", meta_value)
                    .with_meta("label", "X"),
            );
        }
        doc.add_layer(&format!("layer_{l}"), entities).unwrap();
    }
    doc
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn serialization_round_trip(seed in any::<u64>()) {
        let doc = random_document(seed);
        let bytes = serialize(&doc);
        let back = deserialize(&bytes).unwrap();
        prop_assert_eq!(&back, &doc);
        prop_assert_eq!(serialize(&back), bytes);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn offset_coherence(seed in any::<u64>()) {
        let mut rng = StdRng::seed_from_u64(seed);
        let text = format!("{}x", random_text(&mut rng, 120));
        let chars: Vec<char> = text.chars().collect();
        let n = chars.len();
        let doc = Document::new("d", text.clone(), pages(1)).unwrap();
        let ps = rng.random_range(0..n);
        let pe = rng.random_range(ps + 1..=n);
        let parent = Entity::new(0).with_spans(vec![Span::new(ps, pe).unwrap()]);
        let ls = rng.random_range(0..pe - ps);
        let le = rng.random_range(ls + 1..=pe - ps);
        let global = map_local_span(&parent, Span::new(ls, le).unwrap()).unwrap();
        // Oracle: slice the parent's text by chars, then slice locally.
        let parent_text: String = chars[ps..pe].iter().collect();
        let local: String = parent_text.chars().skip(ls).take(le - ls).collect();
        prop_assert_eq!(doc.slice(global), local.as_str());
        let over = Span::new(ls, pe - ps + 1).unwrap();
        prop_assert!(map_local_span(&parent, over).is_err());
    }
}

/// Words of 1..6 chars separated by spaces; lines group consecutive words.
fn lined_document(seed: u64) -> Document {
    let mut rng = StdRng::seed_from_u64(seed);
    let n_pages = rng.random_range(1..3);
    let mut text = String::new();
    let mut words = Vec::new();
    let mut lines = Vec::new();
    let mut line_start = 0usize;
    let mut line_words = 0;
    let n_words = rng.random_range(1..40);
    for i in 0..n_words {
        if i > 0 {
            text.push(if line_words == 0 { '\n' } else { ' ' });
        }
        let start = text.chars().count();
        let len = rng.random_range(1..6);
        for _ in 0..len {
            text.push(['a', 'é', 'Z', '中'][rng.random_range(0..4)]);
        }
        if line_words == 0 {
            line_start = start;
        }
        words.push(
            Entity::new(i)
                .with_spans(vec![Span::new(start, start + len).unwrap()])
                .with_boxes(vec![random_box(&mut rng, n_pages)]),
        );
        line_words += 1;
        if line_words >= rng.random_range(1..6) || i + 1 == n_words {
            lines.push(Entity::new(lines.len() as u64).with_spans(vec![Span::new(line_start, start + len).unwrap()]));
            line_words = 0;
        }
    }
    let mut doc = Document::new("d", text, pages(n_pages)).unwrap();
    doc.add_layer("words", words).unwrap();
    doc.add_layer("lines", lines).unwrap();
    doc
}

fn union_boxes(a: BBox, b: BBox) -> BBox {
    let x0 = a.x.min(b.x);
    let y0 = a.y.min(b.y);
    let x1 = (a.x + a.w).max(b.x + b.w);
    let y1 = (a.y + a.h).max(b.y + b.h);
    BBox::new(a.page, x0, y0, x1 - x0, y1 - y0).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn span_to_boxes_matches_brute_force(seed in any::<u64>()) {
        let doc = lined_document(seed);
        let mut rng = StdRng::seed_from_u64(seed ^ 0xabc);
        let n = doc.char_len();
        let s = rng.random_range(0..n);
        let e = rng.random_range(s + 1..=n);
        let span = Span::new(s, e).unwrap();
        let got = span_to_boxes(&doc, span).unwrap();

        // Oracle: per line and page, union the boxes of the words overlapping the span.
        let words = &doc.layer("words").unwrap().entities;
        let mut expected: Vec<BBox> = Vec::new();
        for line in &doc.layer("lines").unwrap().entities {
            let ls = line.spans[0];
            let mut per_page: Vec<BBox> = Vec::new();
            for w in words {
                let ws = w.spans[0];
                let inside = ws.start() >= ls.start() && ws.end() <= ls.end();
                let overlaps = ws.start() < span.end() && span.start() < ws.end();
                if inside && overlaps {
                    for b in &w.boxes {
                        match per_page.iter_mut().find(|u| u.page == b.page) {
                            Some(u) => *u = union_boxes(*u, *b),
                            None => per_page.push(*b),
                        }
                    }
                }
            }
            expected.extend(per_page);
        }
        expected.sort_by(|a, b| a.page.cmp(&b.page).then(a.y.total_cmp(&b.y)).then(a.x.total_cmp(&b.x)));
        prop_assert_eq!(got.len(), expected.len());
        for (g, x) in got.iter().zip(&expected) {
            prop_assert_eq!(g.page, x.page);
            for (a, b) in [(g.x, x.x), (g.y, x.y), (g.w, x.w), (g.h, x.h)] {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn entity_at_position_matches_brute_force_over_1000_clicks() {
    let mut rng = StdRng::seed_from_u64(7);
    let doc = lined_document(11);
    let words = &doc.layer("words").unwrap().entities;
    for _ in 0..1000 {
        let page = rng.random_range(0..doc.pages.len() as u32);
        let (x, y) = (rng.random_range(0.0..1.0), rng.random_range(0.0..1.0));
        let hit = entity_at_position(&doc, "words", page, x, y).unwrap().map(|e| e.id);
        let expected = words
            .iter()
            .flat_map(|e| e.boxes.iter().map(move |b| (e.id, b)))
            .filter(|(_, b)| b.page == page && b.x <= x && x <= b.x + b.w && b.y <= y && y <= b.y + b.h)
            .min_by(|a, b| (a.1.w * a.1.h).total_cmp(&(b.1.w * b.1.h)).then(a.0.cmp(&b.0)))
            .map(|(id, _)| id);
        assert_eq!(hit, expected, "click ({x}, {y}) on page {page}");
    }
}
