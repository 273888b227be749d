//! Independent reference implementations and seeded case generators.
//!
//! Nothing here depends on layerlab-core; values are plain tuples so the
//! oracles cannot share code paths with the implementation under test.

use rand::seq::IndexedRandom;
use rand::{Rng, RngCore};
use serde_json::{json, Map, Value};

/// `(x, y, w, h)` in some unit frame.
pub type R = [f64; 4];

fn overlap_1d(a0: f64, a1: f64, b0: f64, b1: f64) -> f64 {
    (a1.min(b1) - a0.max(b0)).max(0.0)
}

/// A grid of row and column bands plus words, all crop-relative.
#[derive(Debug, Clone)]
pub struct SyntheticGrid {
    pub rows: Vec<R>,
    pub columns: Vec<R>,
    pub words: Vec<(String, R)>,
}

/// Random grid with 1..=6 rows and columns of jittered size and 0..=30
/// words at arbitrary positions, some straddling boundaries or outside.
pub fn random_grid(rng: &mut impl RngCore) -> SyntheticGrid {
    let cuts = |rng: &mut dyn RngCore, n: usize| -> Vec<(f64, f64)> {
        let mut weights: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..2.0)).collect();
        let total: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= total);
        let mut out = Vec::new();
        let mut at = 0.0;
        for w in weights {
            out.push((at, w));
            at += w;
        }
        out
    };
    let nr = rng.random_range(1..=6);
    let nc = rng.random_range(1..=6);
    let rows = cuts(rng, nr).into_iter().map(|(y, h)| [0.0, y, 1.0, h]).collect();
    let columns = cuts(rng, nc).into_iter().map(|(x, w)| [x, 0.0, w, 1.0]).collect();
    let n = rng.random_range(0..=30);
    let words = (0..n)
        .map(|i| {
            let w = rng.random_range(0.01..0.3);
            let h = rng.random_range(0.01..0.2);
            let x = rng.random_range(-0.1..1.0);
            let y = rng.random_range(-0.1..1.0);
            (format!("w{i}"), [x, y, w, h])
        })
        .collect();
    SyntheticGrid { rows, columns, words }
}

/// Result of the overlap oracle: cell texts and unassigned word indices.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleAssignment {
    pub grid: Vec<Vec<String>>,
    pub unassigned: Vec<usize>,
}

/// Exhaustive word-to-cell assignment: compute the overlap fraction of every
/// word with every row × column intersection, keep the largest (first in
/// row-major order on ties within 1e-9) if it reaches one half.
pub fn overlap_oracle(g: &SyntheticGrid) -> OracleAssignment {
    let mut rows = g.rows.clone();
    let mut cols = g.columns.clone();
    rows.sort_by(|a, b| a[1].total_cmp(&b[1]));
    cols.sort_by(|a, b| a[0].total_cmp(&b[0]));
    let mut grid = vec![vec![Vec::<String>::new(); cols.len()]; rows.len()];
    let mut unassigned = Vec::new();
    for (wi, (text, w)) in g.words.iter().enumerate() {
        let area = w[2] * w[3];
        let mut ratios = Vec::new();
        for (r, row) in rows.iter().enumerate() {
            for (c, col) in cols.iter().enumerate() {
                let ox = overlap_1d(w[0], w[0] + w[2], col[0], col[0] + col[2]);
                let oy = overlap_1d(w[1], w[1] + w[3], row[1], row[1] + row[3]);
                ratios.push((ox * oy / area, r, c));
            }
        }
        let best = ratios
            .iter()
            .fold(None::<(f64, usize, usize)>, |best, &(v, r, c)| match best {
                Some((b, _, _)) if v <= b + 1e-9 => best,
                _ => Some((v, r, c)),
            });
        match best {
            Some((v, r, c)) if v >= 0.5 - 1e-9 => grid[r][c].push(text.clone()),
            _ => unassigned.push(wi),
        }
    }
    OracleAssignment {
        grid: grid
            .into_iter()
            .map(|row| row.into_iter().map(|cell| cell.join(" ")).collect())
            .collect(),
        unassigned,
    }
}

/// A response string with the values a correct extractor must return.
#[derive(Debug, Clone)]
pub struct JsonCase {
    pub text: String,
    /// Expected result of parsing the whole trimmed response as an object.
    pub whole: Option<Map<String, Value>>,
    /// Expected first embedded JSON object or array.
    pub first: Option<Value>,
}

const PROSE: &[&str] = &[
    "Sure, here is the result:",
    "The extracted materials are listed below.",
    "Note: values in [brackets] are estimates.",
    "I found nothing else }",
    "```json",
    "```",
    "see {the table} above",
    "ratio 3:1, yield 45%",
    "Answer:",
    "",
];

fn random_scalar(rng: &mut dyn RngCore) -> Value {
    match rng.random_range(0..5) {
        0 => json!(rng.random_range(-1000..1000)),
        1 => json!(rng.random_range(-10.0..10.0)),
        2 => json!(rng.random_bool(0.5)),
        3 => Value::Null,
        _ => {
            let pool = ["ZSM-5", "a } b", "say \"hi\"", "[x]", "{y}", "Å-phase", "back\\slash", ""];
            json!(pool.choose(rng).unwrap())
        }
    }
}

fn random_value(rng: &mut dyn RngCore, depth: u32) -> Value {
    if depth == 0 || rng.random_bool(0.4) {
        return random_scalar(rng);
    }
    if rng.random_bool(0.5) {
        Value::Array((0..rng.random_range(0..4)).map(|_| random_value(rng, depth - 1)).collect())
    } else {
        Value::Object(random_object(rng, depth - 1))
    }
}

fn random_object(rng: &mut dyn RngCore, depth: u32) -> Map<String, Value> {
    let keys = ["materials", "temp", "a", "b", "note", "x y"];
    let mut m = Map::new();
    for _ in 0..rng.random_range(0..4) {
        m.insert(keys.choose(rng).unwrap().to_string(), random_value(rng, depth));
    }
    m
}

/// Random prose/JSON mixture. Prose fragments never contain an unmatched
/// opening bracket and never parse as JSON themselves.
pub fn random_json_case(rng: &mut impl RngCore) -> JsonCase {
    let rng: &mut dyn RngCore = rng;
    let pretty = rng.random_bool(0.3);
    let render = |v: &Value| {
        if pretty {
            serde_json::to_string_pretty(v).unwrap()
        } else {
            serde_json::to_string(v).unwrap()
        }
    };
    match rng.random_range(0..4) {
        // Bare object with surrounding whitespace.
        0 => {
            let obj = random_object(rng, 2);
            let text = format!("{}{}{}", ["", " ", "\n"].choose(rng).unwrap(), render(&Value::Object(obj.clone())), ["", "\n", "  "].choose(rng).unwrap());
            JsonCase {
                text,
                first: Some(Value::Object(obj.clone())),
                whole: Some(obj),
            }
        }
        // Prose, one value, maybe more prose and a second value.
        1 | 2 => {
            let value = if rng.random_bool(0.7) {
                Value::Object(random_object(rng, 2))
            } else {
                Value::Array((0..rng.random_range(1..4)).map(|_| random_value(rng, 1)).collect())
            };
            let before = PROSE.choose(rng).unwrap();
            let after = PROSE.choose(rng).unwrap();
            let second = if rng.random_bool(0.5) {
                render(&Value::Object(random_object(rng, 1)))
            } else {
                String::new()
            };
            let text = format!("{before} {} {after} {second}", render(&value));
            let prose_free = before.trim().is_empty() && after.trim().is_empty() && second.is_empty();
            let whole = match (&value, prose_free) {
                (Value::Object(m), true) => Some(m.clone()),
                _ => None,
            };
            JsonCase {
                text,
                whole,
                first: Some(value),
            }
        }
        // Prose only.
        _ => {
            let n = rng.random_range(1..4);
            let text = (0..n).map(|_| *PROSE.choose(rng).unwrap()).collect::<Vec<_>>().join(" ");
            JsonCase {
                text,
                whole: None,
                first: None,
            }
        }
    }
}

const CLOSERS: &[char] = &['"', '\'', ')', ']', '\u{201d}', '\u{2019}'];
const OPENERS: &[char] = &['"', '\'', '(', '[', '\u{201c}', '\u{2018}'];

/// Token-level sentence splitter. Splits on whitespace into tokens; a
/// boundary follows token `t` when `t` (minus closing quotes and brackets)
/// ends in `.`, `?` or `!`, the next token (minus opening quotes and
/// brackets) starts with an uppercase letter or digit, and for `.` the
/// tokens before the period do not spell an abbreviation. Returns char
/// spans of the sentences.
pub fn oracle_sentences(text: &str, abbreviations: &[&str]) -> Vec<(usize, usize)> {
    let chars: Vec<char> = text.chars().collect();
    let mut tokens: Vec<(usize, usize)> = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        if chars[i].is_whitespace() {
            i += 1;
            continue;
        }
        let s = i;
        while i < chars.len() && !chars[i].is_whitespace() {
            i += 1;
        }
        tokens.push((s, i));
    }
    let word = |t: (usize, usize)| chars[t.0..t.1].iter().collect::<String>();
    let is_abbreviation = |ti: usize, core: &str| {
        abbreviations.iter().any(|abbr| {
            let parts: Vec<&str> = abbr.split(' ').collect();
            let last = parts[parts.len() - 1].to_lowercase();
            let core_l = core.to_lowercase();
            if !core_l.ends_with(&last) {
                return false;
            }
            let head = &core_l[..core_l.len() - last.len()];
            if head.chars().last().is_some_and(char::is_alphanumeric) {
                return false;
            }
            let earlier = &parts[..parts.len() - 1];
            if earlier.is_empty() {
                return true;
            }
            // Multi-word abbreviations must start the token and match the
            // preceding tokens, separated by single spaces.
            if !head.is_empty() || ti < earlier.len() {
                return false;
            }
            earlier.iter().rev().enumerate().all(|(k, p)| {
                let prev = tokens[ti - 1 - k];
                let gap = &chars[prev.1..tokens[ti - k].0];
                let w = word(prev).to_lowercase();
                let p = p.to_lowercase();
                let boundary_ok = if k + 1 == earlier.len() {
                    w.ends_with(&p) && !w[..w.len() - p.len()].chars().last().is_some_and(char::is_alphanumeric)
                } else {
                    w == p
                };
                gap == [' '] && boundary_ok
            })
        })
    };
    let mut spans = Vec::new();
    let mut start: Option<usize> = None;
    for (ti, &t) in tokens.iter().enumerate() {
        start.get_or_insert(t.0);
        let Some(&next) = tokens.get(ti + 1) else {
            break;
        };
        let w = word(t);
        let stripped = w.trim_end_matches(CLOSERS);
        let Some(term) = stripped.chars().last() else {
            continue;
        };
        if !matches!(term, '.' | '?' | '!') {
            continue;
        }
        let nw = word(next);
        let Some(first) = nw.trim_start_matches(OPENERS).chars().next() else {
            continue;
        };
        if !(first.is_uppercase() || first.is_ascii_digit()) {
            continue;
        }
        if term == '.' && is_abbreviation(ti, &stripped[..stripped.len() - 1]) {
            continue;
        }
        spans.push((start.take().unwrap(), t.1));
    }
    if let (Some(s), Some(last)) = (start, tokens.last()) {
        spans.push((s, last.1));
    }
    spans
}

/// Curated cases with hand-checked sentence counts.
pub const SENTENCE_CASES: &[(&str, usize)] = &[
    ("We used ZSM-5. The ratio was 15.", 2),
    ("Results are shown in Fig. 3 for all samples.", 1),
    ("As reported by Smith et al. The values agree.", 1),
    ("The loading was 3.5 wt. % in total.", 1),
    ("Several zeolites, e.g. ZSM-5, were used.", 1),
    ("It works. Does it? Yes! It does.", 4),
    ("The yield was 0.75. Then it dropped.", 2),
    ("He said \"stop.\" Then he left.", 2),
    ("Heat i.e. Energy was added.", 1),
    ("The sample (No. 4) was calcined. Pores opened.", 2),
];

/// Random multi-sentence text built from scientific-prose tokens.
pub fn random_sentence_text(rng: &mut impl RngCore) -> String {
    const WORDS: &[&str] = &[
        "the", "zeolite", "was", "heated", "ZSM-5", "at", "450", "K", "for", "3.5", "hours", "Fig.", "2",
        "shows", "Smith", "et", "al.", "e.g.", "wt.", "%", "and", "then", "(see", "Table", "1)", "it", "We",
        "Results", "\"quoted\"", "approx.", "i.e.", "No.", "vs.", "done.", "What?", "Yes!", "ratio",
    ];
    let n = rng.random_range(1..30);
    let mut out = Vec::new();
    for _ in 0..n {
        let mut w = WORDS.choose(rng).unwrap().to_string();
        if rng.random_bool(0.15) {
            w.push(*['.', '?', '!'].choose(rng).unwrap());
        }
        if rng.random_bool(0.05) {
            w.push(')');
        }
        out.push(w);
    }
    let mut text = String::new();
    for (i, w) in out.iter().enumerate() {
        if i > 0 {
            text.push_str(if rng.random_bool(0.1) { "\n" } else { " " });
        }
        text.push_str(w);
    }
    text
}

/// Literal lexicon entry: surface, label, case-sensitive flag.
pub type LexEntry = (String, String, bool);

/// Brute-force leftmost-longest literal matcher. At each char position every
/// entry is tried; the longest match wins, earlier entries on ties; matches
/// need non-alphanumeric characters (or text edges) on both sides.
pub fn oracle_gazetteer(entries: &[LexEntry], text: &str) -> Vec<(usize, usize, String)> {
    let chars: Vec<char> = text.chars().collect();
    let lower = |c: char| c.to_lowercase().next().unwrap_or(c);
    let matches_at = |i: usize, e: &LexEntry| -> Option<usize> {
        let s: Vec<char> = e.0.chars().collect();
        let end = i + s.len();
        if s.is_empty() || end > chars.len() {
            return None;
        }
        let eq = (0..s.len()).all(|k| {
            if e.2 {
                chars[i + k] == s[k]
            } else {
                lower(chars[i + k]) == lower(s[k])
            }
        });
        let left = i == 0 || !chars[i - 1].is_alphanumeric();
        let right = end == chars.len() || !chars[end].is_alphanumeric();
        (eq && left && right).then_some(end)
    };
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let mut best: Option<(usize, &LexEntry)> = None;
        for e in entries {
            if let Some(end) = matches_at(i, e) {
                if best.is_none_or(|(b, _)| end > b) {
                    best = Some((end, e));
                }
            }
        }
        match best {
            Some((end, e)) => {
                out.push((i, end, e.1.clone()));
                i = end;
            }
            None => i += 1,
        }
    }
    out
}

/// Random lexicon and text drawn from a small vocabulary so matches,
/// overlaps and near-misses are frequent.
pub fn random_lexicon_case(rng: &mut impl RngCore) -> (Vec<LexEntry>, String) {
    const VOCAB: &[&str] = &[
        "iron", "iron oxide", "oxide", "ZSM-5", "zsm", "silica", "Silica gel", "gel", "Å-phase", "NaOH",
    ];
    const LABELS: &[&str] = &["MATERIAL", "OXIDE", "METHOD"];
    let n = rng.random_range(1..6);
    let entries = (0..n)
        .map(|_| {
            (
                VOCAB.choose(rng).unwrap().to_string(),
                LABELS.choose(rng).unwrap().to_string(),
                rng.random_bool(0.3),
            )
        })
        .collect();
    const FILLER: &[&str] = &["the", "environment", "with", "IRON", "ironing", "-", ",", "(", ")", "5"];
    let m = rng.random_range(0..20);
    let mut parts = Vec::new();
    for _ in 0..m {
        let pool = if rng.random_bool(0.5) { VOCAB } else { FILLER };
        parts.push(*pool.choose(rng).unwrap());
    }
    let sep = if rng.random_bool(0.8) { " " } else { "" };
    (entries, parts.join(sep))
}

/// Random text mixing ASCII, accented and multi-byte characters.
pub fn random_text(rng: &mut impl RngCore, max_chars: usize) -> String {
    const ALPHABET: &[char] = &['a', 'b', 'Z', ' ', '\n', '.', 'é', 'Å', 'α', 'β', '→', '中', '😀', '5'];
    let n = rng.random_range(0..=max_chars);
    (0..n).map(|_| *ALPHABET.choose(rng).unwrap()).collect()
}
