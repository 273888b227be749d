//! Grouping of blocks into named sections.

use std::ops::Range;

use crate::doc::Span;

use super::structure::ServiceSection;

pub const FRONT_MATTER: &str = "front_matter";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SectionSource {
    Default,
    Heuristic,
    StructureService,
    Unnamed,
}

impl SectionSource {
    pub fn as_str(self) -> &'static str {
        match self {
            SectionSource::Default => "default",
            SectionSource::Heuristic => "heuristic",
            SectionSource::StructureService => "structure_service",
            SectionSource::Unnamed => "unnamed",
        }
    }
}

/// What section assignment needs to know about a block.
#[derive(Debug, Clone)]
pub struct SectionBlock {
    pub span: Span,
    /// Heading text with numbering removed, when the block is a heading.
    pub heading: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SectionInfo {
    pub name: String,
    pub order: usize,
    pub source: SectionSource,
    /// Indices of member blocks.
    pub blocks: Range<usize>,
}

/// Partition blocks (in reading order) into sections.
///
/// Every heading block starts a section that runs until the next heading.
/// Blocks before the first heading form "front_matter". Sections located by
/// the structure service rename the section whose heading they match, or
/// start a new section at the block containing them. Headings without a
/// usable name become "unnamed_section_N".
pub fn assign_sections(blocks: &[SectionBlock], service: &[ServiceSection]) -> Vec<SectionInfo> {
    if blocks.is_empty() {
        return Vec::new();
    }
    // (start block, name, source) for every section start.
    let mut starts: Vec<(usize, Option<String>, SectionSource)> = blocks
        .iter()
        .enumerate()
        .filter_map(|(i, b)| {
            b.heading.as_ref().map(|name| {
                let name = (!name.trim().is_empty()).then(|| name.trim().to_string());
                (i, name, SectionSource::Heuristic)
            })
        })
        .collect();
    for sec in service {
        let Some(i) = blocks
            .iter()
            .position(|b| b.span.start() <= sec.span.start() && sec.span.start() < b.span.end())
        else {
            continue;
        };
        let entry = (i, Some(sec.name.clone()), SectionSource::StructureService);
        match starts.iter_mut().find(|(s, _, _)| *s == i) {
            Some(existing) => *existing = entry,
            None => starts.push(entry),
        }
    }
    starts.sort_by_key(|(i, _, _)| *i);

    if starts.first().is_none_or(|(i, _, _)| *i > 0) {
        starts.insert(0, (0, Some(FRONT_MATTER.to_string()), SectionSource::Default));
    }
    let mut out = Vec::with_capacity(starts.len());
    for (order, (start, name, source)) in starts.iter().enumerate() {
        let end = starts.get(order + 1).map_or(blocks.len(), |(s, _, _)| *s);
        let (name, source) = match name {
            Some(n) => (n.clone(), *source),
            None => (format!("unnamed_section_{order}"), SectionSource::Unnamed),
        };
        out.push(SectionInfo {
            name,
            order,
            source,
            blocks: *start..end,
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blocks(n: usize, headings: &[(usize, &str)]) -> Vec<SectionBlock> {
        (0..n)
            .map(|i| SectionBlock {
                span: Span::new(i * 10, i * 10 + 5).unwrap(),
                heading: headings.iter().find(|(h, _)| *h == i).map(|(_, n)| n.to_string()),
            })
            .collect()
    }

    fn summary(s: &[SectionInfo]) -> Vec<(String, Range<usize>)> {
        s.iter().map(|s| (s.name.clone(), s.blocks.clone())).collect()
    }

    #[test]
    fn headings_partition_blocks() {
        let s = assign_sections(&blocks(9, &[(2, "Introduction"), (6, "Methods")]), &[]);
        assert_eq!(
            summary(&s),
            [
                ("front_matter".to_string(), 0..2),
                ("Introduction".to_string(), 2..6),
                ("Methods".to_string(), 6..9)
            ]
        );
        assert_eq!(s.iter().map(|s| s.order).collect::<Vec<_>>(), [0, 1, 2]);
    }

    #[test]
    fn no_headings_single_front_matter() {
        let s = assign_sections(&blocks(4, &[]), &[]);
        assert_eq!(summary(&s), [("front_matter".to_string(), 0..4)]);
        assert!(assign_sections(&[], &[]).is_empty());
    }

    #[test]
    fn leading_heading_has_no_front_matter() {
        let s = assign_sections(&blocks(3, &[(0, "Abstract")]), &[]);
        assert_eq!(summary(&s), [("Abstract".to_string(), 0..3)]);
    }

    #[test]
    fn service_names_take_precedence() {
        let service = [
            ServiceSection {
                name: "Intro".into(),
                span: Span::new(20, 25).unwrap(),
            },
            ServiceSection {
                name: "Experimental".into(),
                span: Span::new(42, 44).unwrap(),
            },
        ];
        let s = assign_sections(&blocks(6, &[(2, "Introduction")]), &service);
        assert_eq!(
            summary(&s),
            [
                ("front_matter".to_string(), 0..2),
                ("Intro".to_string(), 2..4),
                ("Experimental".to_string(), 4..6)
            ]
        );
        assert_eq!(s[1].source, SectionSource::StructureService);
    }

    #[test]
    fn empty_heading_name_is_unnamed() {
        let s = assign_sections(&blocks(3, &[(1, "")]), &[]);
        assert_eq!(s[1].name, "unnamed_section_1");
    }
}
