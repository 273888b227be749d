//! Programmatic PDF fixtures with known ground truth.
//!
//! Every fixture is written with the standard Helvetica font so that no font
//! data has to be embedded. Positions are given in PDF points measured from
//! the top-left corner of the page; the writer flips them into PDF user space.

pub mod client;
pub mod oracles;
pub mod stubs;

use pdf_writer::{Content, Finish, Name, Pdf, Rect, Ref, Str};

pub const LETTER_WIDTH: f64 = 612.0;
pub const LETTER_HEIGHT: f64 = 792.0;

/// Helvetica advance widths for the printable ASCII range (32..=126), in
/// thousandths of an em.
const HELVETICA_WIDTHS: [u16; 95] = [
    278, 278, 355, 556, 556, 889, 667, 191, 333, 333, 389, 584, 278, 333, 278, 278, 556, 556, 556,
    556, 556, 556, 556, 556, 556, 556, 278, 278, 584, 584, 584, 556, 1015, 667, 667, 722, 722, 667,
    611, 778, 722, 278, 500, 667, 556, 833, 722, 778, 667, 778, 722, 667, 611, 722, 667, 944, 667,
    667, 611, 278, 278, 278, 469, 556, 333, 556, 556, 500, 556, 556, 278, 556, 556, 222, 222, 500,
    222, 833, 556, 556, 556, 556, 333, 500, 278, 556, 500, 722, 500, 500, 500, 334, 260, 334, 584,
];

/// Width of `text` set in Helvetica at `size` points.
pub fn helvetica_width(text: &str, size: f64) -> f64 {
    text.chars()
        .map(|c| {
            let code = c as u32;
            if (32..=126).contains(&code) {
                f64::from(HELVETICA_WIDTHS[(code - 32) as usize])
            } else {
                556.0
            }
        })
        .sum::<f64>()
        * size
        / 1000.0
}

/// One run of text drawn with a single `Tj`.
#[derive(Debug, Clone)]
pub struct TextRun {
    pub x: f64,
    /// Baseline, measured from the top of the page.
    pub baseline: f64,
    pub size: f64,
    pub text: String,
}

impl TextRun {
    pub fn new(x: f64, baseline: f64, size: f64, text: impl Into<String>) -> Self {
        Self {
            x,
            baseline,
            size,
            text: text.into(),
        }
    }
}

/// A gray raster drawn at a position on the page.
#[derive(Debug, Clone)]
pub struct ImagePlacement {
    pub x: f64,
    pub top: f64,
    pub width: f64,
    pub height: f64,
}

#[derive(Debug, Clone)]
pub struct PageSpec {
    pub width: f64,
    pub height: f64,
    pub runs: Vec<TextRun>,
    pub images: Vec<ImagePlacement>,
}

impl PageSpec {
    pub fn letter() -> Self {
        Self {
            width: LETTER_WIDTH,
            height: LETTER_HEIGHT,
            runs: Vec::new(),
            images: Vec::new(),
        }
    }

    pub fn run(mut self, x: f64, baseline: f64, size: f64, text: &str) -> Self {
        self.runs.push(TextRun::new(x, baseline, size, text));
        self
    }
}

/// Serialize pages into a PDF byte stream.
pub fn build_pdf(pages: &[PageSpec]) -> Vec<u8> {
    let mut pdf = Pdf::new();
    let catalog_id = Ref::new(1);
    let tree_id = Ref::new(2);
    let font_id = Ref::new(3);
    let image_id = Ref::new(4);
    let mut next = 5;
    let mut page_ids = Vec::new();
    let mut content_ids = Vec::new();
    for _ in pages {
        page_ids.push(Ref::new(next));
        content_ids.push(Ref::new(next + 1));
        next += 2;
    }

    pdf.catalog(catalog_id).pages(tree_id);
    pdf.pages(tree_id)
        .kids(page_ids.iter().copied())
        .count(pages.len() as i32);
    pdf.type1_font(font_id).base_font(Name(b"Helvetica"));

    let gray: [u8; 4] = [40, 120, 200, 90];
    let mut image = pdf.image_xobject(image_id, &gray);
    image.width(2);
    image.height(2);
    image.color_space().device_gray();
    image.bits_per_component(8);
    image.finish();

    for (i, spec) in pages.iter().enumerate() {
        let mut page = pdf.page(page_ids[i]);
        page.media_box(Rect::new(0.0, 0.0, spec.width as f32, spec.height as f32));
        page.parent(tree_id);
        page.contents(content_ids[i]);
        let mut resources = page.resources();
        resources.fonts().pair(Name(b"F1"), font_id);
        resources.x_objects().pair(Name(b"Im1"), image_id);
        resources.finish();
        page.finish();

        let mut content = Content::new();
        for img in &spec.images {
            content.save_state();
            content.transform([
                img.width as f32,
                0.0,
                0.0,
                img.height as f32,
                img.x as f32,
                (spec.height - img.top - img.height) as f32,
            ]);
            content.x_object(Name(b"Im1"));
            content.restore_state();
        }
        for run in &spec.runs {
            content.begin_text();
            content.set_font(Name(b"F1"), run.size as f32);
            content.next_line(run.x as f32, (spec.height - run.baseline) as f32);
            content.show(Str(run.text.as_bytes()));
            content.end_text();
        }
        pdf.stream(content_ids[i], &content.finish());
    }
    pdf.finish()
}

/// A single page containing "Hello world".
pub fn hello_world() -> Vec<u8> {
    build_pdf(&[PageSpec::letter().run(72.0, 100.0, 12.0, "Hello world")])
}

/// A single blank page.
pub fn empty_page() -> Vec<u8> {
    build_pdf(&[PageSpec::letter()])
}

/// One page holding only a raster image and no text.
pub fn image_only() -> Vec<u8> {
    let mut page = PageSpec::letter();
    page.images.push(ImagePlacement {
        x: 100.0,
        top: 100.0,
        width: 300.0,
        height: 200.0,
    });
    build_pdf(&[page])
}

/// Bytes that start like a PDF but cannot be parsed.
pub fn corrupt_pdf() -> Vec<u8> {
    b"%PDF-1.7\n1 0 obj << /Type /Catalog /Pages 9 0 R >>\nthis is not a pdf body\n%%EOF\n".to_vec()
}

/// Two-column page with a full-width title.
pub struct TwoColumnFixture {
    pub pdf: Vec<u8>,
    /// Line texts in the expected reading order.
    pub reading_order: Vec<String>,
}

pub fn two_column() -> TwoColumnFixture {
    let title = "A Two Column Layout Example For Reading Order";
    let left = [
        "left column line one",
        "left column line two",
        "left column line three",
        "left column line four",
    ];
    let right = [
        "right column line one",
        "right column line two",
        "right column line three",
        "right column line four",
    ];
    let mut page = PageSpec::letter();
    let title_x = (LETTER_WIDTH - helvetica_width(title, 12.0)) / 2.0;
    page = page.run(title_x, 80.0, 12.0, title);
    for (i, (l, r)) in left.iter().zip(right.iter()).enumerate() {
        let baseline = 120.0 + 13.0 * i as f64;
        page = page.run(50.0, baseline, 10.0, l);
        page = page.run(345.0, baseline, 10.0, r);
    }
    let mut reading_order = vec![title.to_string()];
    reading_order.extend(left.iter().map(|s| s.to_string()));
    reading_order.extend(right.iter().map(|s| s.to_string()));
    TwoColumnFixture {
        pdf: build_pdf(&[page]),
        reading_order,
    }
}

/// A lexicon term planted in the paper fixture.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantedTerm {
    pub text: &'static str,
    pub label: &'static str,
    pub section: &'static str,
}

/// Single-page "paper" with a front-matter paragraph, two numbered sections,
/// a captioned table and lexicon terms at known places.
pub struct PaperFixture {
    pub pdf: Vec<u8>,
    /// Region-hint sidecar (`<name>.regions.json`) carrying the table geometry.
    pub regions_json: String,
    /// Gazetteer lexicon in TSV form.
    pub lexicon_tsv: String,
    pub planted: Vec<PlantedTerm>,
    /// Expected table grid, header row first.
    pub table_grid: Vec<Vec<String>>,
    /// Expected section names in order.
    pub sections: Vec<&'static str>,
    /// Paragraph texts (lines joined by newlines) with their section.
    pub paragraphs: Vec<(String, &'static str)>,
    /// Table region in normalized page coordinates `(x, y, w, h)`.
    pub table_region: (f64, f64, f64, f64),
}

const SIZE: f64 = 10.0;

pub fn paper() -> PaperFixture {
    let front = ["Notes on the hydrothermal synthesis of porous", "framework materials for catalysis."];
    let intro = [
        "Zeolites are crystalline aluminosilicates with ordered pores.",
        "The framework of ZSM-5 is widely used in catalysis, e.g. for",
        "cracking of hydrocarbons.",
    ];
    let methods = [
        "The gel was prepared from sodium silicate and NaOH at 3.5 wt. %",
        "loading. Crystallization of mordenite was carried out at 450 K",
        "(Fig. 2).",
    ];
    let grid = [
        ["Material", "Temp", "Time"],
        ["ZSM-5", "450", "24"],
        ["Beta", "420", "48"],
        ["Y", "500", "12"],
    ];

    let mut page = PageSpec::letter();
    let x = 72.0;
    let put_lines = |page: &mut PageSpec, first: f64, lines: &[&str]| {
        for (i, line) in lines.iter().enumerate() {
            page.runs.push(TextRun::new(x, first + 13.0 * i as f64, SIZE, *line));
        }
    };
    put_lines(&mut page, 80.0, &front);
    put_lines(&mut page, 125.0, &["1 Introduction"]);
    put_lines(&mut page, 157.0, &intro);
    put_lines(&mut page, 215.0, &["2 Methods"]);
    put_lines(&mut page, 247.0, &methods);
    put_lines(&mut page, 305.0, &["Table 1: Synthesis parameters for each sample."]);

    let col_starts = [72.0, 192.0, 312.0];
    let row_baselines = [337.0, 352.0, 367.0, 382.0];
    for (r, row) in grid.iter().enumerate() {
        for (c, cell) in row.iter().enumerate() {
            page.runs
                .push(TextRun::new(col_starts[c], row_baselines[r], SIZE, *cell));
        }
    }

    // Table region and crop-relative geometry.
    let (left, right) = (66.0, 426.0);
    let (top, bottom) = (row_baselines[0] - 10.5, row_baselines[3] + 4.5);
    let (rw, rh) = (right - left, bottom - top);
    let rows: Vec<String> = row_baselines
        .iter()
        .map(|b| {
            format!(
                "[0.0, {}, 1.0, {}]",
                (b - 10.5 - top) / rh,
                15.0 / rh
            )
        })
        .collect();
    let columns: Vec<String> = col_starts
        .iter()
        .map(|s| format!("[{}, 0.0, {}, 1.0]", (s - 6.0 - left) / rw, 120.0 / rw))
        .collect();
    let region = (
        left / LETTER_WIDTH,
        top / LETTER_HEIGHT,
        rw / LETTER_WIDTH,
        rh / LETTER_HEIGHT,
    );
    let regions_json = format!(
        "{{\"tables\": [{{\"box\": [0, {}, {}, {}, {}], \"rows\": [{}], \"columns\": [{}]}}]}}",
        region.0,
        region.1,
        region.2,
        region.3,
        rows.join(", "),
        columns.join(", ")
    );
    debug_assert!(serde_json::from_str::<serde_json::Value>(&regions_json).is_ok());

    PaperFixture {
        pdf: build_pdf(&[page]),
        regions_json,
        lexicon_tsv: "# surface\tlabel\tflags\nZSM-5\tMATERIAL\nzeolite\tMATERIAL\nNaOH\tMATERIAL\nmordenite\tMATERIAL\n"
            .to_string(),
        planted: vec![
            PlantedTerm {
                text: "ZSM-5",
                label: "MATERIAL",
                section: "Introduction",
            },
            PlantedTerm {
                text: "NaOH",
                label: "MATERIAL",
                section: "Methods",
            },
            PlantedTerm {
                text: "mordenite",
                label: "MATERIAL",
                section: "Methods",
            },
        ],
        table_grid: grid
            .iter()
            .map(|row| row.iter().map(|s| s.to_string()).collect())
            .collect(),
        sections: vec!["front_matter", "Introduction", "Methods"],
        paragraphs: vec![
            (front.join("\n"), "front_matter"),
            (intro.join("\n"), "Introduction"),
            (methods.join("\n"), "Methods"),
        ],
        table_region: region,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pdfs_have_header_and_trailer() {
        for bytes in [hello_world(), empty_page(), image_only(), paper().pdf, two_column().pdf] {
            assert!(bytes.starts_with(b"%PDF-"));
            assert!(bytes.windows(5).any(|w| w == b"%%EOF"));
        }
    }

    #[test]
    fn regions_json_parses() {
        let v: serde_json::Value = serde_json::from_str(&paper().regions_json).unwrap();
        assert_eq!(v["tables"][0]["rows"].as_array().unwrap().len(), 4);
        assert_eq!(v["tables"][0]["columns"].as_array().unwrap().len(), 3);
    }

    #[test]
    fn helvetica_width_matches_afm() {
        // "Hello" = 722 + 556 + 222 + 222 + 556
        assert!((helvetica_width("Hello", 10.0) - 22.78).abs() < 1e-9);
    }
}
