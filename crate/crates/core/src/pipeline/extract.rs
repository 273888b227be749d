//! Word extraction from PDF content streams.
//!
//! Parsing and font handling are delegated to `hayro`'s interpreter; this
//! module only collects positioned glyphs and groups them into words.

use hayro::hayro_interpret::font::{Glyph, GlyphRun};
use hayro::hayro_interpret::hayro_syntax::{LoadPdfError, Pdf};
use hayro::hayro_interpret::util::TransformExt;
use hayro::hayro_interpret::{
    interpret_page, BlendMode, ClipPath, Context, Device, DrawMode, DrawProps, Image,
    ImageDrawProps, InterpreterCache, InterpreterSettings, SoftMask,
};
use hayro::kurbo::{Affine, BezPath, Point};

use crate::doc::{BBox, PageInfo};

#[derive(Debug, thiserror::Error)]
pub enum ExtractError {
    #[error("input is not a PDF: {0}")]
    NotAPdf(String),
    #[error("PDF is encrypted")]
    EncryptedPdf,
}

/// A whitespace-free run of glyphs with its normalized box.
#[derive(Debug, Clone, PartialEq)]
pub struct Word {
    pub text: String,
    pub bbox: BBox,
}

#[derive(Debug, Clone)]
pub struct PageWords {
    pub info: PageInfo,
    pub words: Vec<Word>,
    /// Number of raster images drawn on the page.
    pub images: usize,
}

struct PositionedChar {
    text: String,
    x0: f64,
    y0: f64,
    x1: f64,
    y1: f64,
    baseline: f64,
    size: f64,
}

#[derive(Default)]
struct GlyphCollector {
    chars: Vec<PositionedChar>,
    images: usize,
}

impl GlyphCollector {
    fn push_glyph(&mut self, transform: Affine, text: String, advance: f64) {
        let corners = [
            Point::new(0.0, -200.0),
            Point::new(advance, -200.0),
            Point::new(0.0, 800.0),
            Point::new(advance, 800.0),
        ]
        .map(|p| transform * p);
        let xs = corners.map(|p| p.x);
        let ys = corners.map(|p| p.y);
        let min = |v: [f64; 4]| v.iter().copied().fold(f64::INFINITY, f64::min);
        let max = |v: [f64; 4]| v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let origin = transform * Point::new(0.0, 0.0);
        let up = transform * Point::new(0.0, 1000.0);
        let size = ((up.x - origin.x).powi(2) + (up.y - origin.y).powi(2)).sqrt();
        self.chars.push(PositionedChar {
            text,
            x0: min(xs),
            y0: min(ys),
            x1: max(xs),
            y1: max(ys),
            baseline: origin.y,
            size,
        });
    }
}

impl<'a> Device<'a> for GlyphCollector {
    fn draw_path(&mut self, _: &BezPath, _: DrawProps<'a>, _: &DrawMode) {}
    fn push_clip_path(&mut self, _: &ClipPath) {}
    fn push_transparency_group(&mut self, _: f32, _: Option<SoftMask<'a>>, _: BlendMode) {}

    fn draw_glyph_run(&mut self, run: &GlyphRun<'_, 'a>, props: DrawProps<'a>, _: &DrawMode) {
        for glyph in run.glyphs() {
            let text = match glyph.as_unicode() {
                Some(hayro::hayro_interpret::hayro_cmap::BfString::Char(c)) => c.to_string(),
                Some(hayro::hayro_interpret::hayro_cmap::BfString::String(s)) => s,
                None => continue,
            };
            let advance = match &**glyph {
                Glyph::Outline(o) => o.advance_width().map_or(500.0, f64::from),
                Glyph::Type3(_) => 500.0,
            };
            self.push_glyph(props.transform * glyph.transform(), text, advance);
        }
    }

    fn draw_image(&mut self, _: Image<'a, '_>, _: ImageDrawProps<'a>) {
        self.images += 1;
    }

    fn pop_clip(&mut self) {}
    fn pop_transparency_group(&mut self) {}
}

struct WordAcc {
    text: String,
    x0: f64,
    y0: f64,
    x1: f64,
    y1: f64,
    baseline: f64,
    size: f64,
}

fn group_words(chars: Vec<PositionedChar>) -> Vec<WordAcc> {
    let mut words = Vec::new();
    let mut current: Option<WordAcc> = None;
    for ch in chars {
        if ch.text.chars().all(char::is_whitespace) {
            words.extend(current.take());
            continue;
        }
        if let Some(cur) = &current {
            let tol = cur.size.max(ch.size);
            let new_baseline = (ch.baseline - cur.baseline).abs() > 0.3 * tol;
            let gap = ch.x0 - cur.x1;
            if new_baseline || gap > 0.15 * tol || gap < -0.5 * tol {
                words.extend(current.take());
            }
        }
        match &mut current {
            Some(cur) => {
                cur.text.push_str(&ch.text);
                cur.x0 = cur.x0.min(ch.x0);
                cur.y0 = cur.y0.min(ch.y0);
                cur.x1 = cur.x1.max(ch.x1);
                cur.y1 = cur.y1.max(ch.y1);
            }
            None => {
                current = Some(WordAcc {
                    text: ch.text,
                    x0: ch.x0,
                    y0: ch.y0,
                    x1: ch.x1,
                    y1: ch.y1,
                    baseline: ch.baseline,
                    size: ch.size,
                })
            }
        }
    }
    words.extend(current);
    // Glyph strings may carry embedded whitespace (e.g. ToUnicode mapping to
    // "a b"); split those here so word texts never contain whitespace.
    words
        .into_iter()
        .flat_map(|w| {
            if w.text.chars().any(char::is_whitespace) {
                let parts: Vec<String> = w.text.split_whitespace().map(str::to_string).collect();
                let n = parts.len().max(1) as f64;
                let step = (w.x1 - w.x0) / n;
                parts
                    .into_iter()
                    .enumerate()
                    .map(|(i, text)| WordAcc {
                        text,
                        x0: w.x0 + step * i as f64,
                        x1: w.x0 + step * (i + 1) as f64,
                        ..w
                    })
                    .collect::<Vec<_>>()
            } else {
                vec![w]
            }
        })
        .collect()
}

fn load(bytes: &[u8]) -> Result<Pdf, ExtractError> {
    let head = &bytes[..bytes.len().min(1024)];
    if !head.windows(5).any(|w| w == b"%PDF-") {
        return Err(ExtractError::NotAPdf("missing %PDF- header".into()));
    }
    let pdf = Pdf::new(bytes.to_vec()).map_err(|e| match e {
        LoadPdfError::Decryption(_) => ExtractError::EncryptedPdf,
        LoadPdfError::Invalid => ExtractError::NotAPdf("unparseable document structure".into()),
    })?;
    if pdf.pages().is_empty() {
        return Err(ExtractError::NotAPdf("document has no pages".into()));
    }
    Ok(pdf)
}

/// Check that `bytes` opens as a PDF with at least one page.
pub fn probe_pdf(bytes: &[u8]) -> Result<usize, ExtractError> {
    load(bytes).map(|pdf| pdf.pages().len())
}

/// Extract words with normalized boxes from every page.
pub fn extract_words(bytes: &[u8]) -> Result<Vec<PageWords>, ExtractError> {
    let pdf = load(bytes)?;
    let cache = InterpreterCache::new();
    let settings = InterpreterSettings::default();
    let mut out = Vec::new();
    for (index, page) in pdf.pages().iter().enumerate() {
        let (w, h) = page.render_dimensions();
        let (w, h) = (f64::from(w), f64::from(h));
        let mut ctx = Context::new(
            page.initial_transform(true).to_kurbo(),
            hayro::kurbo::Rect::new(0.0, 0.0, w, h),
            &cache,
            page.xref(),
            settings.clone(),
        );
        let mut collector = GlyphCollector::default();
        interpret_page(page, &mut ctx, &mut collector);
        let images = collector.images;
        let words = group_words(collector.chars)
            .into_iter()
            .filter_map(|acc| {
                let bbox =
                    BBox::clamped(index as u32, acc.x0 / w, acc.y0 / h, acc.x1 / w, acc.y1 / h)?;
                Some(Word {
                    text: acc.text,
                    bbox,
                })
            })
            .collect();
        out.push(PageWords {
            info: PageInfo {
                index: index as u32,
                width_pts: w,
                height_pts: h,
            },
            words,
            images,
        });
    }
    Ok(out)
}
