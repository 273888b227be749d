//! Client for an external document-structure service (TEI-style XML).

use std::time::Duration;

use crate::doc::Span;

use super::blocks::strip_numbering;

pub const STRUCTURE_TIMEOUT: Duration = Duration::from_secs(30);

#[derive(Debug, thiserror::Error)]
pub enum StructureError {
    #[error("structure service unreachable: {0}")]
    Unreachable(String),
    #[error("structure service returned an unparseable response: {0}")]
    UnparseableResponse(String),
}

/// A section heading reported by the service and located in the symbols.
#[derive(Debug, Clone, PartialEq)]
pub struct ServiceSection {
    pub name: String,
    pub span: Span,
}

/// Section heading texts in document order from `<div><head>` elements.
pub fn parse_structure_xml(xml: &str) -> Result<Vec<String>, StructureError> {
    let doc = roxmltree::Document::parse(xml)
        .map_err(|e| StructureError::UnparseableResponse(e.to_string()))?;
    let mut heads = Vec::new();
    for div in doc.descendants().filter(|n| n.has_tag_name("div")) {
        if let Some(head) = div.children().find(|n| n.has_tag_name("head")) {
            let text: String = head
                .descendants()
                .filter(|n| n.is_text())
                .filter_map(|n| n.text())
                .collect();
            let text = text.split_whitespace().collect::<Vec<_>>().join(" ");
            if !text.is_empty() {
                heads.push(text);
            }
        }
    }
    Ok(heads)
}

/// POST the PDF to the service and return its heading texts.
pub fn fetch_headings(pdf: &[u8], url: &str) -> Result<Vec<String>, StructureError> {
    let client = reqwest::blocking::Client::builder()
        .timeout(STRUCTURE_TIMEOUT)
        .build()
        .map_err(|e| StructureError::Unreachable(e.to_string()))?;
    let part = reqwest::blocking::multipart::Part::bytes(pdf.to_vec())
        .file_name("document.pdf")
        .mime_str("application/pdf")
        .expect("static mime type");
    let form = reqwest::blocking::multipart::Form::new().part("input", part);
    let resp = client
        .post(url)
        .multipart(form)
        .send()
        .map_err(|e| StructureError::Unreachable(e.to_string()))?;
    let status = resp.status();
    let body = resp
        .text()
        .map_err(|e| StructureError::Unreachable(e.to_string()))?;
    if !status.is_success() {
        return Err(StructureError::Unreachable(format!("HTTP {status}")));
    }
    parse_structure_xml(&body)
}

/// Lowercased text with whitespace runs collapsed to one space, plus the
/// original char index of each retained char.
fn normalize(text: &str) -> (Vec<char>, Vec<usize>) {
    let mut chars = Vec::new();
    let mut origin = Vec::new();
    let mut pending_space = false;
    for (i, c) in text.chars().enumerate() {
        if c.is_whitespace() {
            pending_space = !chars.is_empty();
            continue;
        }
        if pending_space {
            chars.push(' ');
            origin.push(i - 1);
            pending_space = false;
        }
        for lc in c.to_lowercase() {
            chars.push(lc);
            origin.push(i);
        }
    }
    (chars, origin)
}

fn find_exact(hay: &[char], needle: &[char], from: usize) -> Option<usize> {
    if needle.is_empty() || needle.len() > hay.len() {
        return None;
    }
    (from..=hay.len() - needle.len()).find(|&i| &hay[i..i + needle.len()] == needle)
}

/// Longest common substring between `needle` and `hay[from..]`, returned as
/// (start in hay, length).
fn longest_common_substring(hay: &[char], needle: &[char], from: usize) -> (usize, usize) {
    let m = needle.len();
    let mut prev = vec![0usize; m + 1];
    let mut cur = vec![0usize; m + 1];
    let mut best = (0, 0);
    for (i, &h) in hay.iter().enumerate().skip(from) {
        for j in 1..=m {
            cur[j] = if needle[j - 1] == h { prev[j - 1] + 1 } else { 0 };
            if cur[j] > best.1 {
                best = (i + 1 - cur[j], cur[j]);
            }
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    best
}

/// Locate each heading in `symbols`, in order. Returns located sections and
/// the headings that could not be matched.
///
/// Matching tries an exact match after whitespace normalization and
/// lowercasing, then the longest common substring if it covers at least 90%
/// of the heading. Each search starts after the previous match.
pub fn align_headings(symbols: &str, headings: &[String]) -> (Vec<ServiceSection>, Vec<String>) {
    let (hay, origin) = normalize(symbols);
    let mut cursor = 0;
    let mut found = Vec::new();
    let mut unmatched = Vec::new();
    for heading in headings {
        let (needle, _) = normalize(heading);
        if needle.is_empty() {
            unmatched.push(heading.clone());
            continue;
        }
        let hit = find_exact(&hay, &needle, cursor).map(|s| (s, needle.len())).or_else(|| {
            let (s, len) = longest_common_substring(&hay, &needle, cursor);
            (len > 0 && len as f64 >= 0.9 * needle.len() as f64).then_some((s, len))
        });
        match hit {
            Some((s, len)) => {
                let start = origin[s];
                let end = origin[s + len - 1] + 1;
                cursor = s + len;
                found.push(ServiceSection {
                    name: strip_numbering(heading).to_string(),
                    span: Span::new(start, end).expect("match is non-empty"),
                });
            }
            None => unmatched.push(heading.clone()),
        }
    }
    (found, unmatched)
}
