use std::collections::BTreeMap;

use super::{BBox, DocError, Document, Entity, Span};

/// Boxes highlighting `span` on the page: one per line touched by the span,
/// each the minimal rectangle around the overlapping words of that line.
/// Ordered by (page, y, x).
pub fn span_to_boxes(doc: &Document, span: Span) -> Result<Vec<BBox>, DocError> {
    let words = doc.require_layer("words")?;
    let lines = doc.require_layer("lines")?;

    let mut line_index: Vec<(Span, u64)> = lines
        .entities
        .iter()
        .filter_map(|l| l.covering_span().map(|s| (s, l.id)))
        .collect();
    line_index.sort_by_key(|(s, _)| s.start());

    // Group key: Some(line id) or None + word id for words outside any line.
    let mut groups: BTreeMap<(Option<u64>, u64, u32), BBox> = BTreeMap::new();
    for word in &words.entities {
        let Some(ws) = word.covering_span() else {
            continue;
        };
        if !ws.overlaps(&span) {
            continue;
        }
        let pos = line_index.partition_point(|(s, _)| s.start() <= ws.start());
        let line = pos
            .checked_sub(1)
            .map(|i| line_index[i])
            .filter(|(s, _)| s.contains(&ws))
            .map(|(_, id)| id);
        let word_key = if line.is_some() { 0 } else { word.id };
        for b in &word.boxes {
            groups
                .entry((line, word_key, b.page))
                .and_modify(|u| *u = u.union(b))
                .or_insert(*b);
        }
    }
    let mut out: Vec<BBox> = groups.into_values().collect();
    out.sort_by(|a, b| {
        a.page
            .cmp(&b.page)
            .then(a.y.total_cmp(&b.y))
            .then(a.x.total_cmp(&b.x))
    });
    Ok(out)
}

/// Entity of `layer` with a box on `page` containing the point. Among several
/// hits the smallest box area wins, then the lowest id.
pub fn entity_at_position<'d>(
    doc: &'d Document,
    layer: &str,
    page: u32,
    x: f64,
    y: f64,
) -> Result<Option<&'d Entity>, DocError> {
    let layer = doc.require_layer(layer)?;
    let mut best: Option<(f64, u64, &Entity)> = None;
    for e in &layer.entities {
        let area = e
            .boxes
            .iter()
            .filter(|b| b.page == page && b.contains_point(x, y))
            .map(BBox::area)
            .min_by(f64::total_cmp);
        let Some(area) = area else { continue };
        let better = match best {
            None => true,
            Some((a, id, _)) => area < a || (area == a && e.id < id),
        };
        if better {
            best = Some((area, e.id, e));
        }
    }
    Ok(best.map(|(_, _, e)| e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::doc::PageInfo;

    fn page() -> PageInfo {
        PageInfo {
            index: 0,
            width_pts: 612.0,
            height_pts: 792.0,
        }
    }

    fn bx(x: f64, y: f64, w: f64, h: f64) -> BBox {
        BBox::new(0, x, y, w, h).unwrap()
    }

    fn sp(s: usize, e: usize) -> Span {
        Span::new(s, e).unwrap()
    }

    /// "Foo bar\nbaz": two words on line 0, one on line 1.
    fn doc() -> Document {
        let mut d = Document::new("d", "Foo bar\nbaz", vec![page()]).unwrap();
        d.add_layer(
            "words",
            vec![
                Entity::new(0).with_spans(vec![sp(0, 3)]).with_boxes(vec![bx(0.10, 0.20, 0.05, 0.01)]),
                Entity::new(1).with_spans(vec![sp(4, 7)]).with_boxes(vec![bx(0.16, 0.20, 0.05, 0.01)]),
                Entity::new(2).with_spans(vec![sp(8, 11)]).with_boxes(vec![bx(0.10, 0.22, 0.05, 0.01)]),
            ],
        )
        .unwrap();
        d.add_layer(
            "lines",
            vec![
                Entity::new(0).with_spans(vec![sp(0, 7)]).with_boxes(vec![bx(0.10, 0.20, 0.11, 0.01)]),
                Entity::new(1).with_spans(vec![sp(8, 11)]).with_boxes(vec![bx(0.10, 0.22, 0.05, 0.01)]),
            ],
        )
        .unwrap();
        d
    }

    #[test]
    fn adjacent_words_on_one_line_merge() {
        let boxes = span_to_boxes(&doc(), sp(0, 7)).unwrap();
        assert_eq!(boxes.len(), 1);
        let b = boxes[0];
        assert_eq!(b.page, 0);
        assert!((b.x - 0.10).abs() < 1e-12);
        assert!((b.y - 0.20).abs() < 1e-12);
        assert!((b.w - 0.11).abs() < 1e-12);
        assert!((b.h - 0.01).abs() < 1e-12);
    }

    #[test]
    fn two_lines_give_two_boxes() {
        let boxes = span_to_boxes(&doc(), sp(5, 10)).unwrap();
        assert_eq!(boxes.len(), 2);
        assert!(boxes[0].y < boxes[1].y);
    }

    #[test]
    fn no_overlap_gives_nothing() {
        // The newline between the lines is not part of any word.
        assert!(span_to_boxes(&doc(), sp(7, 8)).unwrap().is_empty());
    }

    #[test]
    fn missing_layers_error() {
        let d = Document::new("d", "x", vec![page()]).unwrap();
        assert!(matches!(
            span_to_boxes(&d, sp(0, 1)),
            Err(DocError::MissingLayer(_))
        ));
    }

    #[test]
    fn click_resolution() {
        let mut d = Document::new("d", "x", vec![page()]).unwrap();
        d.add_layer(
            "blocks",
            vec![
                Entity::new(0).with_boxes(vec![bx(0.0, 0.0, 1.0, 1.0)]),
                Entity::new(1).with_boxes(vec![bx(0.2, 0.2, 0.3, 0.3)]),
                Entity::new(2).with_boxes(vec![bx(0.6, 0.6, 0.1, 0.1)]),
                Entity::new(3).with_boxes(vec![bx(0.6, 0.6, 0.1, 0.1)]),
            ],
        )
        .unwrap();
        d.add_layer("paragraphs", vec![Entity::new(7).with_boxes(vec![bx(0.1, 0.1, 0.2, 0.2)])])
            .unwrap();
        let hit = |layer: &str, x, y| entity_at_position(&d, layer, 0, x, y).unwrap().map(|e| e.id);
        assert_eq!(hit("paragraphs", 0.15, 0.15), Some(7));
        assert_eq!(hit("paragraphs", 0.95, 0.95), None);
        assert_eq!(hit("blocks", 0.3, 0.3), Some(1));
        assert_eq!(hit("blocks", 0.65, 0.65), Some(2));
        assert_eq!(hit("blocks", 0.9, 0.1), Some(0));
        assert!(entity_at_position(&d, "nope", 0, 0.1, 0.1).is_err());
        assert_eq!(entity_at_position(&d, "blocks", 1, 0.1, 0.1).unwrap().map(|e| e.id), None);
    }
}
