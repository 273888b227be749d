//! Lexicon-based token classification.

use std::collections::HashMap;
use std::path::Path;

use regex::Regex;

use crate::predict::{PredictorError, TaggedSpan, TokenClassificationPredictor};

/// Lexicon used when no other lexicon is configured.
pub const DEFAULT_LEXICON: &str = "\
# surface\tlabel\tflags
zeolite\tMATERIAL
zeolites\tMATERIAL
ZSM-5\tMATERIAL
mordenite\tMATERIAL
faujasite\tMATERIAL
silica\tMATERIAL
alumina\tMATERIAL
aluminosilicate\tMATERIAL
aluminosilicates\tMATERIAL
sodium silicate\tMATERIAL
NaOH\tMATERIAL
SiO2\tMATERIAL
Al2O3\tMATERIAL
TiO2\tMATERIAL
iron oxide\tMATERIAL
graphene\tMATERIAL
perovskite\tMATERIAL
MOF-5\tMATERIAL
hydrothermal synthesis\tMETHOD
calcination\tMETHOD
crystallization\tMETHOD
ion exchange\tMETHOD
";

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("lexicon line {line}: {message}")]
pub struct LexiconError {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone)]
enum Matcher {
    Literal(Vec<char>),
    Pattern(Regex),
}

#[derive(Debug, Clone)]
pub struct LexiconEntry {
    pub surface: String,
    pub label: String,
    pub case_sensitive: bool,
    pub is_regex: bool,
    matcher: Matcher,
}

impl LexiconEntry {
    pub fn literal(surface: &str, label: &str, case_sensitive: bool) -> Result<Self, String> {
        if surface.is_empty() || label.is_empty() {
            return Err("surface and label must be non-empty".into());
        }
        Ok(Self {
            surface: surface.into(),
            label: label.into(),
            case_sensitive,
            is_regex: false,
            matcher: Matcher::Literal(surface.chars().collect()),
        })
    }

    pub fn pattern(pattern: &str, label: &str, case_sensitive: bool) -> Result<Self, String> {
        if pattern.is_empty() || label.is_empty() {
            return Err("pattern and label must be non-empty".into());
        }
        let flags = if case_sensitive { "" } else { "(?i)" };
        let re = Regex::new(&format!("^{flags}(?:{pattern})")).map_err(|e| e.to_string())?;
        Ok(Self {
            surface: pattern.into(),
            label: label.into(),
            case_sensitive,
            is_regex: true,
            matcher: Matcher::Pattern(re),
        })
    }
}

/// Parse TSV lexicon text: `surface<TAB>label[<TAB>flags]` with flags a
/// comma-separated subset of `regex` and `case_sensitive`. Blank lines and
/// lines starting with `#` are ignored.
pub fn parse_lexicon(text: &str) -> Result<Vec<LexiconEntry>, LexiconError> {
    let mut entries = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let err = |message: String| LexiconError { line, message };
        let trimmed = raw.trim_end_matches('\r');
        if trimmed.trim().is_empty() || trimmed.trim_start().starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = trimmed.split('\t').collect();
        if !(2..=3).contains(&cols.len()) {
            return Err(err(format!("expected 2 or 3 tab-separated columns, found {}", cols.len())));
        }
        let (mut regex, mut case_sensitive) = (false, false);
        if let Some(flags) = cols.get(2) {
            for flag in flags.split(',').map(str::trim).filter(|f| !f.is_empty()) {
                match flag {
                    "regex" => regex = true,
                    "case_sensitive" => case_sensitive = true,
                    other => return Err(err(format!("unknown flag {other:?}"))),
                }
            }
        }
        let (surface, label) = (cols[0].trim(), cols[1].trim());
        let entry = if regex {
            LexiconEntry::pattern(surface, label, case_sensitive)
        } else {
            LexiconEntry::literal(surface, label, case_sensitive)
        };
        entries.push(entry.map_err(err)?);
    }
    Ok(entries)
}

fn fold(c: char) -> char {
    c.to_lowercase().next().unwrap_or(c)
}

/// Tags lexicon entries: at each position the longest match wins (earlier
/// entries on equal length), scanning left to right without overlaps.
/// Literal entries only match at word boundaries.
pub struct GazetteerTagger {
    entries: Vec<LexiconEntry>,
    /// Literal entries by folded first char.
    by_first: HashMap<char, Vec<usize>>,
    patterns: Vec<usize>,
}

impl GazetteerTagger {
    pub fn new(entries: Vec<LexiconEntry>) -> Self {
        let mut by_first: HashMap<char, Vec<usize>> = HashMap::new();
        let mut patterns = Vec::new();
        for (i, e) in entries.iter().enumerate() {
            match &e.matcher {
                Matcher::Literal(chars) => by_first.entry(fold(chars[0])).or_default().push(i),
                Matcher::Pattern(_) => patterns.push(i),
            }
        }
        Self {
            entries,
            by_first,
            patterns,
        }
    }

    pub fn from_tsv(text: &str) -> Result<Self, LexiconError> {
        parse_lexicon(text).map(Self::new)
    }

    pub fn from_path(path: &Path) -> Result<Self, LexiconError> {
        let text = std::fs::read_to_string(path).map_err(|e| LexiconError {
            line: 0,
            message: format!("cannot read {}: {e}", path.display()),
        })?;
        Self::from_tsv(&text)
    }

    pub fn entries(&self) -> &[LexiconEntry] {
        &self.entries
    }

    fn literal_len(entry: &LexiconEntry, chars: &[char], start: usize) -> Option<usize> {
        let Matcher::Literal(surface) = &entry.matcher else {
            return None;
        };
        let end = start + surface.len();
        if end > chars.len() {
            return None;
        }
        let same = chars[start..end].iter().zip(surface).all(|(&a, &b)| {
            if entry.case_sensitive {
                a == b
            } else {
                a == b || fold(a) == fold(b)
            }
        });
        let left_ok = start == 0 || !chars[start - 1].is_alphanumeric();
        let right_ok = end == chars.len() || !chars[end].is_alphanumeric();
        (same && left_ok && right_ok).then_some(surface.len())
    }

    /// Tag one text; offsets are char positions.
    pub fn tag(&self, text: &str) -> Vec<TaggedSpan> {
        let chars: Vec<char> = text.chars().collect();
        let byte_at: Vec<usize> = text
            .char_indices()
            .map(|(b, _)| b)
            .chain(std::iter::once(text.len()))
            .collect();
        let mut out = Vec::new();
        let mut i = 0;
        while i < chars.len() {
            let mut best: Option<(usize, usize)> = None;
            let mut consider = |idx: usize, len: usize| {
                if len > 0 && best.is_none_or(|(bl, bi)| len > bl || (len == bl && idx < bi)) {
                    best = Some((len, idx));
                }
            };
            if let Some(candidates) = self.by_first.get(&fold(chars[i])) {
                for &idx in candidates {
                    if let Some(len) = Self::literal_len(&self.entries[idx], &chars, i) {
                        consider(idx, len);
                    }
                }
            }
            for &idx in &self.patterns {
                let Matcher::Pattern(re) = &self.entries[idx].matcher else {
                    continue;
                };
                if let Some(m) = re.find(&text[byte_at[i]..]) {
                    let end_byte = byte_at[i] + m.end();
                    let end = byte_at.partition_point(|&b| b < end_byte);
                    consider(idx, end - i);
                }
            }
            match best {
                Some((len, idx)) => {
                    out.push(TaggedSpan::new(i, i + len, self.entries[idx].label.clone()));
                    i += len;
                }
                None => i += 1,
            }
        }
        out
    }
}

impl TokenClassificationPredictor for GazetteerTagger {
    fn tag_batch(&self, texts: &[&str]) -> Result<Vec<Vec<TaggedSpan>>, PredictorError> {
        Ok(texts.iter().map(|t| self.tag(t)).collect())
    }
}
