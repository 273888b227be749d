//! Rule-based sentence segmentation for scientific text.

use std::collections::BTreeSet;

use crate::doc::Span;

const CLOSERS: &[char] = &['"', '\'', ')', ']', '\u{201d}', '\u{2019}'];
const OPENERS: &[char] = &['"', '\'', '(', '[', '\u{201c}', '\u{2018}'];

fn ends_with_abbreviation(before: &[char], abbreviations: &BTreeSet<String>) -> bool {
    abbreviations.iter().any(|abbr| {
        let a: Vec<char> = abbr.chars().collect();
        if a.is_empty() || a.len() > before.len() {
            return false;
        }
        let tail = &before[before.len() - a.len()..];
        let same = tail
            .iter()
            .zip(&a)
            .all(|(x, y)| x.to_lowercase().eq(y.to_lowercase()));
        let boundary = before.len() == a.len() || !before[before.len() - a.len() - 1].is_alphanumeric();
        same && boundary
    })
}

/// Split `text` into sentences, returning char spans relative to `text`.
///
/// A sentence ends after `.`, `?` or `!` (plus any closing quotes or
/// brackets) when followed by whitespace and a token starting with an
/// uppercase letter or digit. A period does not end a sentence when it
/// follows an abbreviation from `abbreviations` or sits between digits.
/// Spans are trimmed to non-whitespace characters.
pub fn segment_sentences(text: &str, abbreviations: &BTreeSet<String>) -> Vec<Span> {
    let chars: Vec<char> = text.chars().collect();
    let n = chars.len();
    let mut cuts = Vec::new();
    let mut i = 0;
    while i < n {
        let c = chars[i];
        if matches!(c, '.' | '?' | '!') {
            let mut j = i + 1;
            while j < n && CLOSERS.contains(&chars[j]) {
                j += 1;
            }
            let mut k = j;
            while k < n && chars[k].is_whitespace() {
                k += 1;
            }
            let mut t = k;
            while t < n && OPENERS.contains(&chars[t]) {
                t += 1;
            }
            let followed = k > j && t < n && (chars[t].is_uppercase() || chars[t].is_ascii_digit());
            let decimal = c == '.'
                && i > 0
                && chars[i - 1].is_ascii_digit()
                && chars.get(i + 1).is_some_and(char::is_ascii_digit);
            let abbreviation = c == '.' && ends_with_abbreviation(&chars[..i], abbreviations);
            if followed && !decimal && !abbreviation {
                cuts.push(j);
                i = j;
                continue;
            }
        }
        i += 1;
    }
    cuts.push(n);

    let mut spans = Vec::new();
    let mut start = 0;
    for cut in cuts {
        let mut s = start;
        let mut e = cut;
        while s < e && chars[s].is_whitespace() {
            s += 1;
        }
        while e > s && chars[e - 1].is_whitespace() {
            e -= 1;
        }
        if s < e {
            spans.push(Span::new(s, e).expect("non-empty sentence"));
        }
        start = cut;
    }
    spans
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::config::default_abbreviations;

    fn split(text: &str) -> Vec<(usize, usize)> {
        segment_sentences(text, &default_abbreviations())
            .into_iter()
            .map(|s| (s.start(), s.end()))
            .collect()
    }

    #[test]
    fn two_plain_sentences() {
        assert_eq!(split("We used ZSM-5. The ratio was 15."), [(0, 14), (15, 32)]);
    }

    #[test]
    fn abbreviations_and_decimals_do_not_split() {
        assert_eq!(split("Fig. 3 shows results.").len(), 1);
        assert_eq!(split("The ratio was 3.5 wt. % overall.").len(), 1);
        assert_eq!(split("As shown by Smith et al. The data agree.").len(), 1);
        assert_eq!(split("See e.g. Table 2 for details.").len(), 1);
    }

    #[test]
    fn abbreviation_needs_word_boundary() {
        // "Bat." ends in "at" but is not the abbreviation "at".
        assert_eq!(split("We saw a Bat. It flew.").len(), 2);
    }

    #[test]
    fn lowercase_continuation_and_quotes() {
        assert_eq!(split("It was done. then more.").len(), 1);
        assert_eq!(split("He said \"stop.\" Then left."), [(0, 15), (16, 26)]);
        assert_eq!(split("Is it? (Yes) it is.").len(), 2);
    }

    #[test]
    fn whitespace_is_trimmed_and_empty_input_yields_nothing() {
        assert_eq!(split("  A b.\n\nC d.  "), [(2, 6), (8, 12)]);
        assert!(split("   ").is_empty());
    }
}
