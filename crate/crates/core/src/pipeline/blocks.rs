//! Block detection and classification.

use std::sync::LazyLock;

use regex::Regex;

use crate::doc::Rect;

use super::extract::Word;
use super::layout::{median_height, Line};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BlockClass {
    Paragraph,
    Heading,
    TableCandidate,
    Caption,
    Other,
}

impl BlockClass {
    pub fn as_str(self) -> &'static str {
        match self {
            BlockClass::Paragraph => "paragraph",
            BlockClass::Heading => "heading",
            BlockClass::TableCandidate => "table_candidate",
            BlockClass::Caption => "caption",
            BlockClass::Other => "other",
        }
    }
}

/// Tolerance for word starts to count as vertically aligned.
pub const ALIGN_TOLERANCE: f64 = 0.01;

pub const SECTION_LEXICON: [&str; 10] = [
    "abstract",
    "introduction",
    "methods",
    "results",
    "discussion",
    "conclusion",
    "references",
    "acknowledgements",
    "appendix",
    "related work",
];

static NUMBERED: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^(\d+(\.\d+)*\.?|[IVX]+\.)\s+\S").unwrap());
static NUMBER_PREFIX: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^(\d+(\.\d+)*\.?|[IVX]+\.)\s+").unwrap());
static CAPTION: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^(Figure|Fig\.|Table)\s+\d+").unwrap());

/// Group consecutive lines (in reading order) into blocks.
///
/// A line joins the current block when it lies in the same column region,
/// sits below the block's last line with a vertical gap under
/// `block_gap_factor × median line height`, and overlaps it horizontally by
/// at least half of the narrower of the two.
pub fn detect_blocks(lines: &[Line], block_gap_factor: f64) -> Vec<Vec<usize>> {
    let Some(h) = median_height(lines.iter().map(|l| &l.rect)) else {
        return Vec::new();
    };
    let mut blocks: Vec<Vec<usize>> = Vec::new();
    for (i, line) in lines.iter().enumerate() {
        let joins = blocks.last().is_some_and(|b| {
            let prev = &lines[*b.last().unwrap()];
            let gap = line.rect.y - prev.rect.bottom();
            let overlap = (line.rect.right().min(prev.rect.right()) - line.rect.x.max(prev.rect.x))
                .max(0.0);
            let narrower = line.rect.w.min(prev.rect.w);
            prev.region == line.region
                && line.rect.center().1 > prev.rect.center().1
                && gap < block_gap_factor * h
                && narrower > 0.0
                && overlap >= 0.5 * narrower
        });
        if joins {
            blocks.last_mut().unwrap().push(i);
        } else {
            blocks.push(vec![i]);
        }
    }
    blocks
}

pub fn line_text(words: &[Word], line: &Line) -> String {
    line.words
        .iter()
        .map(|&i| words[i].text.as_str())
        .collect::<Vec<_>>()
        .join(" ")
}

/// Strip a leading section number ("2.1 ", "IV. ") from a heading.
pub fn strip_numbering(text: &str) -> &str {
    match NUMBER_PREFIX.find(text) {
        Some(m) => text[m.end()..].trim(),
        None => text.trim(),
    }
}

fn is_title_case(text: &str) -> bool {
    let letters: Vec<char> = text.chars().filter(|c| c.is_alphabetic()).collect();
    if letters.is_empty() {
        return false;
    }
    if letters.iter().all(|c| c.is_uppercase()) {
        return true;
    }
    let first_upper = letters[0].is_uppercase();
    first_upper
        && text.split_whitespace().all(|w| {
            let alpha: Vec<char> = w.chars().filter(|c| c.is_alphabetic()).collect();
            alpha.len() < 4 || alpha[0].is_uppercase()
        })
}

fn mentions_lexicon_term(text: &str) -> bool {
    let lower = text.to_lowercase();
    let tokens: Vec<&str> = lower
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .collect();
    SECTION_LEXICON.iter().any(|term| {
        let parts: Vec<&str> = term.split(' ').collect();
        tokens.windows(parts.len()).any(|w| w == parts.as_slice())
    })
}

/// Whether a single line of text reads as a section heading.
pub fn is_heading_line(text: &str) -> bool {
    let text = text.trim();
    if text.is_empty() {
        return false;
    }
    let chars = text.chars().count();
    if NUMBERED.is_match(text) && chars < 100 {
        let rest = strip_numbering(text);
        return rest.chars().next().is_some_and(char::is_alphabetic) && !rest.ends_with('.');
    }
    chars < 60 && !text.ends_with('.') && is_title_case(text) && mentions_lexicon_term(text)
}

/// Number of aligned word-start columns shared by enough rows to form a table.
fn aligned_columns(starts_per_line: &[Vec<f64>], min_columns: usize) -> bool {
    if starts_per_line.len() < 3 {
        return false;
    }
    let mut all: Vec<(f64, usize)> = starts_per_line
        .iter()
        .enumerate()
        .flat_map(|(li, xs)| xs.iter().map(move |&x| (x, li)))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    // Anchored clusters: each cluster holds starts within the tolerance of its
    // leftmost member.
    let mut clusters: Vec<Vec<usize>> = Vec::new();
    let mut anchor = f64::NEG_INFINITY;
    for (x, li) in all {
        if x - anchor > ALIGN_TOLERANCE {
            anchor = x;
            clusters.push(Vec::new());
        }
        clusters.last_mut().unwrap().push(li);
    }
    let columns: Vec<Vec<usize>> = clusters
        .into_iter()
        .map(|mut lines| {
            lines.sort_unstable();
            lines.dedup();
            lines
        })
        .filter(|lines| lines.len() >= 3)
        .collect();
    if columns.len() < min_columns {
        return false;
    }
    let rows = (0..starts_per_line.len())
        .filter(|li| columns.iter().filter(|c| c.binary_search(li).is_ok()).count() >= min_columns)
        .count();
    rows >= 3 && rows * 2 >= starts_per_line.len()
}

/// Classify a block from its line texts and word start positions.
pub fn classify_block(
    line_texts: &[String],
    word_starts: &[Vec<f64>],
    min_table_aligned_columns: usize,
) -> BlockClass {
    let Some(first) = line_texts.first() else {
        return BlockClass::Other;
    };
    if CAPTION.is_match(first.trim_start()) {
        return BlockClass::Caption;
    }
    if aligned_columns(word_starts, min_table_aligned_columns) {
        return BlockClass::TableCandidate;
    }
    if line_texts.len() <= 2 && is_heading_line(first) {
        return BlockClass::Heading;
    }
    BlockClass::Paragraph
}

pub fn block_rect(lines: &[Line], members: &[usize]) -> Rect {
    members
        .iter()
        .map(|&i| lines[i].rect)
        .reduce(|a, b| a.union(&b))
        .expect("blocks are never empty")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::layout::Region;

    fn line(x: f64, y: f64, w: f64, region: Region) -> Line {
        Line {
            words: vec![],
            rect: Rect::new(x, y, w, 0.01),
            region,
        }
    }

    #[test]
    fn tight_lines_merge_and_gaps_split() {
        let lines = vec![
            line(0.1, 0.100, 0.8, Region::Full),
            line(0.1, 0.113, 0.8, Region::Full),
            line(0.1, 0.126, 0.6, Region::Full),
            line(0.1, 0.166, 0.8, Region::Full),
        ];
        assert_eq!(detect_blocks(&lines, 1.8), vec![vec![0, 1, 2], vec![3]]);
    }

    #[test]
    fn columns_never_merge() {
        let lines = vec![
            line(0.1, 0.100, 0.35, Region::Left),
            line(0.55, 0.100, 0.35, Region::Right),
            line(0.1, 0.113, 0.35, Region::Left),
        ];
        assert_eq!(detect_blocks(&lines, 1.8).len(), 3);
        // Same region but no horizontal overlap.
        let lines = vec![line(0.1, 0.1, 0.2, Region::Full), line(0.6, 0.113, 0.2, Region::Full)];
        assert_eq!(detect_blocks(&lines, 1.8).len(), 2);
    }

    fn classify(texts: &[&str]) -> BlockClass {
        let t: Vec<String> = texts.iter().map(|s| s.to_string()).collect();
        let starts: Vec<Vec<f64>> = texts.iter().map(|_| vec![0.1]).collect();
        classify_block(&t, &starts, 3)
    }

    #[test]
    fn headings() {
        assert_eq!(classify(&["2. Related Work"]), BlockClass::Heading);
        assert_eq!(classify(&["1 Introduction"]), BlockClass::Heading);
        assert_eq!(classify(&["3.2 Sample preparation"]), BlockClass::Heading);
        assert_eq!(classify(&["ABSTRACT"]), BlockClass::Heading);
        assert_eq!(classify(&["Conclusion"]), BlockClass::Heading);
        assert_eq!(classify(&["Results are shown in the table below."]), BlockClass::Paragraph);
        assert_eq!(classify(&["3.5 wt. % loading was used."]), BlockClass::Paragraph);
        assert_eq!(classify(&["We report results.", "More text.", "Even more."]), BlockClass::Paragraph);
    }

    #[test]
    fn captions() {
        assert_eq!(classify(&["Table 1: Synthesis parameters"]), BlockClass::Caption);
        assert_eq!(classify(&["Fig. 2 Micrographs"]), BlockClass::Caption);
        assert_eq!(classify(&["Figure 10. Results"]), BlockClass::Caption);
    }

    #[test]
    fn aligned_grid_is_table_candidate() {
        let texts: Vec<String> = (0..4).map(|i| format!("{i} {i} {i}")).collect();
        let starts: Vec<Vec<f64>> = (0..4).map(|i| vec![0.1, 0.3 + 0.001 * i as f64, 0.5]).collect();
        assert_eq!(classify_block(&texts, &starts, 3), BlockClass::TableCandidate);
        // Two aligned columns do not satisfy a three-column minimum.
        let starts: Vec<Vec<f64>> = (0..4).map(|i| vec![0.1, 0.3, 0.5 + 0.05 * i as f64]).collect();
        assert_eq!(classify_block(&texts, &starts, 3), BlockClass::Paragraph);
        // Alignment across only two lines is not enough.
        let starts: Vec<Vec<f64>> = vec![vec![0.1, 0.3, 0.5], vec![0.1, 0.3, 0.5]];
        assert_eq!(classify_block(&texts[..2], &starts, 3), BlockClass::Paragraph);
    }
}
