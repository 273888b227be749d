//! Assembly of the document text from ordered words.

use crate::doc::Span;

/// Words of one line.
pub type LineWords<'a> = Vec<&'a str>;
/// Lines of one block.
pub type BlockLines<'a> = Vec<LineWords<'a>>;

/// Output of [`compose_symbols`]. Spans are char offsets, listed in the same
/// order as the input (flattened across pages, blocks and lines).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Composed {
    pub symbols: String,
    pub words: Vec<Span>,
    pub lines: Vec<Span>,
    pub blocks: Vec<Span>,
    /// `None` for pages without text.
    pub pages: Vec<Option<Span>>,
}

/// Join words with " ", lines with "\n", blocks with "\n\n" and pages with
/// "\n\n". Pages without text contribute nothing.
pub fn compose_symbols(pages: &[Vec<BlockLines<'_>>]) -> Composed {
    let mut out = Composed::default();
    let mut len = 0usize;
    let push = |out: &mut Composed, len: &mut usize, s: &str| {
        out.symbols.push_str(s);
        *len += s.chars().count();
        *len
    };
    let mut any_text = false;
    for blocks in pages {
        let has_text = blocks.iter().flatten().flatten().next().is_some();
        if !has_text {
            out.pages.push(None);
            continue;
        }
        if any_text {
            push(&mut out, &mut len, "\n\n");
        }
        any_text = true;
        let page_start = len;
        let mut first_block = true;
        for block in blocks.iter().filter(|b| b.iter().flatten().next().is_some()) {
            if !first_block {
                push(&mut out, &mut len, "\n\n");
            }
            first_block = false;
            let block_start = len;
            let mut first_line = true;
            for line in block.iter().filter(|l| !l.is_empty()) {
                if !first_line {
                    push(&mut out, &mut len, "\n");
                }
                first_line = false;
                let line_start = len;
                for (i, word) in line.iter().enumerate() {
                    if i > 0 {
                        push(&mut out, &mut len, " ");
                    }
                    let start = len;
                    let end = push(&mut out, &mut len, word);
                    out.words.push(Span::new(start, end).expect("words are non-empty"));
                }
                let end = len;
                out.lines.push(Span::new(line_start, end).expect("lines are non-empty"));
            }
            let end = len;
            out.blocks.push(Span::new(block_start, end).expect("blocks are non-empty"));
        }
        let end = len;
        out.pages.push(Some(Span::new(page_start, end).expect("page has text")));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sp(s: usize, e: usize) -> Span {
        Span::new(s, e).unwrap()
    }

    #[test]
    fn lines_within_block() {
        let c = compose_symbols(&[vec![vec![vec!["Foo", "bar"], vec!["baz"]]]]);
        assert_eq!(c.symbols, "Foo bar\nbaz");
        assert_eq!(c.words, vec![sp(0, 3), sp(4, 7), sp(8, 11)]);
        assert_eq!(c.lines, vec![sp(0, 7), sp(8, 11)]);
        assert_eq!(c.blocks, vec![sp(0, 11)]);
    }

    #[test]
    fn blocks_and_pages() {
        let c = compose_symbols(&[vec![vec![vec!["A"]], vec![vec!["B"]]]]);
        assert_eq!(c.symbols, "A\n\nB");
        let c = compose_symbols(&[vec![vec![vec!["A"]]], vec![], vec![vec![vec!["B"]]]]);
        assert_eq!(c.symbols, "A\n\nB");
        assert_eq!(c.pages, vec![Some(sp(0, 1)), None, Some(sp(3, 4))]);
    }

    #[test]
    fn empty_document() {
        let c = compose_symbols(&[]);
        assert_eq!(c.symbols, "");
        assert!(c.words.is_empty());
    }

    #[test]
    fn offsets_are_char_based() {
        let c = compose_symbols(&[vec![vec![vec!["µm", "Å"]]]]);
        assert_eq!(c.words, vec![sp(0, 2), sp(3, 4)]);
    }
}
