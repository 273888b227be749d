//! PDF to [`Document`] conversion: word extraction, layout analysis and the
//! core layers every predictor builds on.

pub mod blocks;
pub mod config;
pub mod extract;
pub mod hints;
pub mod layout;
pub mod sections;
pub mod sentences;
pub mod structure;
pub mod symbols;

use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::doc::{span_to_boxes, BBox, DocError, Document, Entity, Span};

pub use blocks::{classify_block, detect_blocks, BlockClass};
pub use config::{ConfigError, PipelineConfig};
pub use extract::{extract_words, probe_pdf, ExtractError, PageWords, Word};
pub use hints::{HintError, RegionHints, TableHint};
pub use layout::{build_lines, Line, Region};
pub use sections::{assign_sections, SectionInfo};
pub use sentences::segment_sentences;
pub use symbols::{compose_symbols, Composed};

/// Layers produced by [`run_core_pipeline`], always present (possibly empty).
pub const CORE_LAYERS: [&str; 10] = [
    "pages",
    "words",
    "lines",
    "blocks",
    "headings",
    "paragraphs",
    "captions",
    "tables",
    "sections",
    "sentences",
];

pub const WARN_NO_TEXT: &str = "no_extractable_text";
pub const WARN_STRUCTURE_FALLBACK: &str = "structure_service_fallback";

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Extract(#[from] ExtractError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("internal document error: {0}")]
    Document(#[from] DocError),
}

/// Lowercase hex SHA-256, used as the document id.
pub fn doc_id_for(pdf: &[u8]) -> String {
    hex::encode(Sha256::digest(pdf))
}

struct PageLayout {
    lines: Vec<Line>,
    blocks: Vec<Vec<usize>>,
    classes: Vec<BlockClass>,
}

struct BlockRec {
    page: u32,
    span: Span,
    bbox: BBox,
    class: BlockClass,
    text: String,
}

fn layout_page(words: &[Word], config: &PipelineConfig) -> PageLayout {
    let lines = build_lines(words, config.line_gap_factor);
    let blocks = detect_blocks(&lines, config.block_gap_factor);
    let classes = blocks
        .iter()
        .map(|members| {
            let texts: Vec<String> = members
                .iter()
                .map(|&l| blocks::line_text(words, &lines[l]))
                .collect();
            let starts: Vec<Vec<f64>> = members
                .iter()
                .map(|&l| lines[l].words.iter().map(|&w| words[w].bbox.x).collect())
                .collect();
            classify_block(&texts, &starts, config.min_table_aligned_columns)
        })
        .collect();
    PageLayout {
        lines,
        blocks,
        classes,
    }
}

fn section_meta(sections: &[SectionInfo], block_section: &[usize], block: usize) -> Value {
    block_section
        .get(block)
        .map_or(Value::Null, |&s| Value::from(sections[s].name.clone()))
}

/// Convert a PDF into a [`Document`] with the core layers.
///
/// Extraction errors are returned; every later stage degrades to empty
/// layers plus warnings instead of failing.
pub fn run_core_pipeline(
    pdf: &[u8],
    source_filename: &str,
    config: &PipelineConfig,
    hints: Option<&RegionHints>,
) -> Result<Document, PipelineError> {
    config.validate()?;
    let pages = extract_words(pdf)?;
    let mut warnings: Vec<String> = Vec::new();

    let layouts: Vec<PageLayout> = pages.iter().map(|p| layout_page(&p.words, config)).collect();
    let nested: Vec<Vec<symbols::BlockLines<'_>>> = pages
        .iter()
        .zip(&layouts)
        .map(|(page, layout)| {
            layout
                .blocks
                .iter()
                .map(|members| {
                    members
                        .iter()
                        .map(|&l| {
                            layout.lines[l]
                                .words
                                .iter()
                                .map(|&w| page.words[w].text.as_str())
                                .collect()
                        })
                        .collect()
                })
                .collect()
        })
        .collect();
    let composed = compose_symbols(&nested);

    let page_infos = pages.iter().map(|p| p.info).collect();
    let mut doc = Document::new(doc_id_for(pdf), composed.symbols.clone(), page_infos)?;
    doc.metadata.source_filename = source_filename.to_string();
    doc.metadata.pipeline_config_hash = config.config_hash();

    if composed.words.is_empty() {
        warnings.push(WARN_NO_TEXT.to_string());
    }
    for page in &pages {
        if page.words.is_empty() {
            warnings.push(format!("page_{}_{WARN_NO_TEXT}", page.info.index));
        }
    }

    // Word, line and block entities in reading order.
    let mut words = Vec::new();
    let mut lines = Vec::new();
    let mut block_recs: Vec<BlockRec> = Vec::new();
    let (mut wi, mut li) = (0usize, 0usize);
    for (page, layout) in pages.iter().zip(&layouts) {
        let p = page.info.index;
        for (members, class) in layout.blocks.iter().zip(&layout.classes) {
            let mut texts = Vec::new();
            for &l in members {
                let line = &layout.lines[l];
                for &w in &line.words {
                    let word = &page.words[w];
                    words.push(
                        Entity::new(wi as u64)
                            .with_spans(vec![composed.words[wi]])
                            .with_boxes(vec![word.bbox]),
                    );
                    wi += 1;
                }
                lines.push(
                    Entity::new(li as u64)
                        .with_spans(vec![composed.lines[li]])
                        .with_boxes(vec![BBox::from_rect(p, line.rect)?])
                        .with_meta("region", line.region.as_str()),
                );
                texts.push(blocks::line_text(&page.words, line));
                li += 1;
            }
            block_recs.push(BlockRec {
                page: p,
                span: composed.blocks[block_recs.len()],
                bbox: BBox::from_rect(p, blocks::block_rect(&layout.lines, members))?,
                class: *class,
                text: texts.join(" "),
            });
        }
    }
    let pages_layer: Vec<Entity> = pages
        .iter()
        .zip(&composed.pages)
        .map(|(page, span)| {
            Entity::new(page.info.index as u64)
                .with_spans(span.iter().copied().collect())
                .with_boxes(vec![BBox::new(page.info.index, 0.0, 0.0, 1.0, 1.0).expect("unit box")])
                .with_meta("width_pts", page.info.width_pts)
                .with_meta("height_pts", page.info.height_pts)
        })
        .collect();
    doc.add_layer("pages", pages_layer)?;
    doc.add_layer("words", words)?;
    doc.add_layer("lines", lines)?;

    // Sections, optionally guided by the structure service.
    let mut service_sections = Vec::new();
    if let Some(url) = &config.structure_service_url {
        match structure::fetch_headings(pdf, url) {
            Ok(headings) => {
                let (found, unmatched) = structure::align_headings(doc.symbols(), &headings);
                service_sections = found;
                for h in unmatched {
                    warnings.push(format!("structure_service_unmatched_heading: {h}"));
                }
            }
            Err(e) => {
                tracing::warn!(error = %e, "structure service failed, using heuristic sections");
                warnings.push(WARN_STRUCTURE_FALLBACK.to_string());
            }
        }
    }
    let section_blocks: Vec<sections::SectionBlock> = block_recs
        .iter()
        .map(|b| sections::SectionBlock {
            span: b.span,
            heading: (b.class == BlockClass::Heading)
                .then(|| blocks::strip_numbering(&b.text).to_string()),
        })
        .collect();
    let section_list = assign_sections(&section_blocks, &service_sections);
    let mut block_section = vec![0usize; block_recs.len()];
    for (si, s) in section_list.iter().enumerate() {
        for b in s.blocks.clone() {
            block_section[b] = si;
        }
    }
    let sec = |b: usize| section_meta(&section_list, &block_section, b);

    let blocks_layer: Vec<Entity> = block_recs
        .iter()
        .enumerate()
        .map(|(i, b)| {
            Entity::new(i as u64)
                .with_spans(vec![b.span])
                .with_boxes(vec![b.bbox])
                .with_meta("class", b.class.as_str())
                .with_meta("section", sec(i))
        })
        .collect();
    doc.add_layer("blocks", blocks_layer)?;

    let of_class = |class: BlockClass| {
        block_recs
            .iter()
            .enumerate()
            .filter(move |(_, b)| b.class == class)
            .map(|(i, _)| i)
    };
    let headings: Vec<Entity> = of_class(BlockClass::Heading)
        .enumerate()
        .map(|(id, b)| {
            Entity::new(id as u64)
                .with_spans(vec![block_recs[b].span])
                .with_boxes(vec![block_recs[b].bbox])
                .with_meta("block_id", b as u64)
                .with_meta("section", sec(b))
        })
        .collect();
    doc.add_layer("headings", headings)?;
    let captions: Vec<Entity> = of_class(BlockClass::Caption)
        .enumerate()
        .map(|(id, b)| {
            Entity::new(id as u64)
                .with_spans(vec![block_recs[b].span])
                .with_boxes(vec![block_recs[b].bbox])
                .with_meta("block_id", b as u64)
                .with_meta("section", sec(b))
        })
        .collect();
    doc.add_layer("captions", captions)?;

    // Paragraphs; a paragraph interrupted by a page break is one entity when
    // the first part lacks final punctuation and the next starts lowercase.
    let mut paragraph_groups: Vec<Vec<usize>> = Vec::new();
    for b in of_class(BlockClass::Paragraph) {
        let continues = paragraph_groups.last().is_some_and(|g| {
            let prev = &block_recs[*g.last().unwrap()];
            let next = &block_recs[b];
            *g.last().unwrap() + 1 == b
                && next.page == prev.page + 1
                && !prev.text.trim_end().ends_with(['.', '?', '!', ':'])
                && next.text.chars().next().is_some_and(char::is_lowercase)
        });
        if continues {
            paragraph_groups.last_mut().unwrap().push(b);
        } else {
            paragraph_groups.push(vec![b]);
        }
    }
    let paragraphs: Vec<Entity> = paragraph_groups
        .iter()
        .enumerate()
        .map(|(id, group)| {
            let first = &block_recs[group[0]];
            let last = &block_recs[*group.last().unwrap()];
            Entity::new(id as u64)
                .with_spans(vec![Span::new(first.span.start(), last.span.end()).expect("ordered blocks")])
                .with_boxes(group.iter().map(|&b| block_recs[b].bbox).collect())
                .with_meta("block_ids", group.iter().map(|&b| b as u64).collect::<Vec<_>>())
                .with_meta("section", sec(group[0]))
        })
        .collect();

    // Tables: detected candidates, merged with or extended by region hints.
    let mut tables: Vec<Entity> = of_class(BlockClass::TableCandidate)
        .map(|b| {
            Entity::new(0)
                .with_spans(vec![block_recs[b].span])
                .with_boxes(vec![block_recs[b].bbox])
                .with_meta("source", "candidate")
                .with_meta("block_id", b as u64)
                .with_meta("section", sec(b))
        })
        .collect();
    if let Some(hints) = hints {
        for (i, hint) in hints.tables.iter().enumerate() {
            if hint.bbox.page as usize >= doc.pages.len() {
                warnings.push(format!("region_hint_out_of_range: tables[{i}]"));
                continue;
            }
            let overlapping = tables
                .iter_mut()
                .filter(|t| t.meta_str("source") == Some("candidate"))
                .map(|t| (t.boxes[0].intersection_area(&hint.bbox), t))
                .filter(|(a, _)| *a > 0.0)
                .max_by(|a, b| a.0.total_cmp(&b.0))
                .map(|(_, t)| t);
            let geometry = hint
                .geometry
                .as_ref()
                .map(|g| serde_json::to_value(g).expect("geometry is plain data"));
            match overlapping {
                Some(t) => {
                    t.boxes = vec![hint.bbox];
                    t.metadata.insert("source".into(), json!("candidate+hint"));
                    if let Some(g) = geometry {
                        t.metadata.insert("table_geometry".into(), g);
                    }
                }
                None => {
                    let inside: Vec<&Entity> = doc
                        .require_layer("words")?
                        .entities
                        .iter()
                        .filter(|w| {
                            let (cx, cy) = w.boxes[0].center();
                            w.boxes[0].page == hint.bbox.page && hint.bbox.contains_point(cx, cy)
                        })
                        .collect();
                    let span = match (inside.first(), inside.last()) {
                        (Some(a), Some(b)) => Span::new(a.spans[0].start(), b.spans[0].end()).ok(),
                        _ => None,
                    };
                    let section = span
                        .and_then(|s| block_recs.iter().position(|b| b.span.contains(&Span::new(s.start(), s.start() + 1).unwrap())))
                        .map_or(Value::Null, sec);
                    let mut t = Entity::new(0)
                        .with_spans(span.into_iter().collect())
                        .with_boxes(vec![hint.bbox])
                        .with_meta("source", "hint")
                        .with_meta("section", section);
                    if let Some(g) = geometry {
                        t.metadata.insert("table_geometry".into(), g);
                    }
                    tables.push(t);
                }
            }
        }
    }
    for (id, t) in tables.iter_mut().enumerate() {
        t.id = id as u64;
    }
    doc.add_layer("tables", tables)?;

    let section_entities: Vec<Entity> = section_list
        .iter()
        .map(|s| {
            let first = &block_recs[s.blocks.start];
            let last = &block_recs[s.blocks.end - 1];
            Entity::new(s.order as u64)
                .with_spans(vec![Span::new(first.span.start(), last.span.end()).expect("ordered blocks")])
                .with_boxes(s.blocks.clone().map(|b| block_recs[b].bbox).collect())
                .with_meta("name", s.name.clone())
                .with_meta("order", s.order as u64)
                .with_meta("source", s.source.as_str())
        })
        .collect();
    doc.add_layer("sections", section_entities)?;

    let mut sentences = Vec::new();
    for p in &paragraphs {
        let span = p.spans[0];
        let text = doc.slice(span);
        for local in segment_sentences(text, &config.abbreviation_list) {
            let global = Span::new(span.start() + local.start(), span.start() + local.end())?;
            let boxes = span_to_boxes(&doc, global)?;
            sentences.push(
                Entity::new(sentences.len() as u64)
                    .with_spans(vec![global])
                    .with_boxes(boxes)
                    .with_meta("paragraph_id", p.id)
                    .with_meta("section", p.metadata.get("section").cloned().unwrap_or(Value::Null)),
            );
        }
    }
    doc.add_layer("paragraphs", paragraphs)?;
    doc.add_layer("sentences", sentences)?;

    doc.metadata.warnings = warnings;
    Ok(doc)
}
