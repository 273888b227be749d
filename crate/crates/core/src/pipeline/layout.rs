//! Line grouping and reading order, including two-column pages.

use crate::doc::Rect;

use super::extract::Word;

/// Width of the whitespace strip probed for a column gutter.
pub const GUTTER_WIDTH: f64 = 0.04;
/// Fraction of the text height the gutter must keep clear.
pub const GUTTER_CLEAR_FRACTION: f64 = 0.6;
/// Fraction of the text height each column must fill beside the gutter.
pub const COLUMN_FILL_FRACTION: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Region {
    Full,
    Left,
    Right,
}

impl Region {
    pub fn as_str(self) -> &'static str {
        match self {
            Region::Full => "full",
            Region::Left => "left",
            Region::Right => "right",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Line {
    /// Indices into the page's word list, sorted by x.
    pub words: Vec<usize>,
    pub rect: Rect,
    pub region: Region,
}

fn median(mut values: Vec<f64>) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    Some(if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    })
}

pub fn median_height<'a>(rects: impl Iterator<Item = &'a Rect>) -> Option<f64> {
    median(rects.map(|r| r.h).collect())
}

fn vertical_coverage(mut intervals: Vec<(f64, f64)>) -> f64 {
    intervals.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut total = 0.0;
    let mut current: Option<(f64, f64)> = None;
    for (a, b) in intervals {
        match current {
            Some((s, e)) if a <= e => current = Some((s, e.max(b))),
            Some((s, e)) => {
                total += e - s;
                current = Some((a, b));
            }
            None => current = Some((a, b)),
        }
    }
    if let Some((s, e)) = current {
        total += e - s;
    }
    total
}

/// Center of the column gutter if the page is laid out in two columns.
///
/// Strips of width [`GUTTER_WIDTH`] centered in [0.45, 0.55] are probed; a
/// strip qualifies when the words crossing it cover at most 40% of the text
/// height and, on each side, words level with no crossing word cover at least
/// [`COLUMN_FILL_FRACTION`] of the text height. The second condition keeps
/// single-column pages with many short lines from being split.
pub fn detect_gutter(rects: &[Rect]) -> Option<f64> {
    if rects.is_empty() {
        return None;
    }
    let top = rects.iter().map(|r| r.y).fold(f64::INFINITY, f64::min);
    let bottom = rects.iter().map(Rect::bottom).fold(f64::NEG_INFINITY, f64::max);
    let text_height = bottom - top;
    if text_height <= 0.0 {
        return None;
    }
    let mut best: Option<(f64, f64)> = None;
    for step in 0..=40 {
        let c = 0.45 + 0.0025 * step as f64;
        let (lo, hi) = (c - GUTTER_WIDTH / 2.0, c + GUTTER_WIDTH / 2.0);
        let crossing: Vec<(f64, f64)> = rects
            .iter()
            .filter(|r| r.x < hi && r.right() > lo)
            .map(|r| (r.y, r.bottom()))
            .collect();
        let beside = |keep: &dyn Fn(&Rect) -> bool| {
            let free: Vec<(f64, f64)> = rects
                .iter()
                .filter(|r| keep(r))
                .filter(|r| !crossing.iter().any(|&(a, b)| r.y < b && r.bottom() > a))
                .map(|r| (r.y, r.bottom()))
                .collect();
            vertical_coverage(free) / text_height
        };
        if beside(&|r| r.right() <= lo) < COLUMN_FILL_FRACTION
            || beside(&|r| r.x >= hi) < COLUMN_FILL_FRACTION
        {
            continue;
        }
        let clear = 1.0 - vertical_coverage(crossing.clone()) / text_height;
        if clear >= GUTTER_CLEAR_FRACTION && best.is_none_or(|(b, _)| clear > b) {
            best = Some((clear, c));
        }
    }
    best.map(|(_, c)| c)
}

/// Greedy band grouping: words sorted by vertical center join the current
/// line while their center lies within `band` of the line's mean center.
fn group_band(words: &[Word], mut members: Vec<usize>, band: f64, region: Region) -> Vec<Line> {
    members.sort_by(|&a, &b| {
        let (ra, rb) = (words[a].bbox.rect(), words[b].bbox.rect());
        ra.center()
            .1
            .total_cmp(&rb.center().1)
            .then(ra.x.total_cmp(&rb.x))
    });
    let mut lines: Vec<(Vec<usize>, f64)> = Vec::new();
    for i in members {
        let cy = words[i].bbox.rect().center().1;
        match lines.last_mut() {
            Some((line, sum)) if (cy - *sum / line.len() as f64).abs() < band => {
                line.push(i);
                *sum += cy;
            }
            _ => lines.push((vec![i], cy)),
        }
    }
    lines
        .into_iter()
        .map(|(ids, _)| make_line(words, ids, region))
        .collect()
}

fn make_line(words: &[Word], mut ids: Vec<usize>, region: Region) -> Line {
    ids.sort_by(|&a, &b| words[a].bbox.x.total_cmp(&words[b].bbox.x).then(a.cmp(&b)));
    let rect = ids
        .iter()
        .map(|&i| words[i].bbox.rect())
        .reduce(|a, b| a.union(&b))
        .expect("lines are never empty");
    Line {
        words: ids,
        rect,
        region,
    }
}

fn line_sort(a: &Line, b: &Line) -> std::cmp::Ordering {
    a.rect.y.total_cmp(&b.rect.y).then(a.rect.x.total_cmp(&b.rect.x))
}

/// Group a page's words into lines and return them in reading order.
///
/// Words belong to the same line when their vertical centers differ by less
/// than `line_gap_factor × median word height / 2` from the line's mean
/// center. On two-column pages the left column is read before the right one;
/// lines crossing the gutter split the page into segments that are read in
/// turn.
pub fn build_lines(words: &[Word], line_gap_factor: f64) -> Vec<Line> {
    let rects: Vec<Rect> = words.iter().map(|w| w.bbox.rect()).collect();
    let Some(h) = median_height(rects.iter()) else {
        return Vec::new();
    };
    let band = line_gap_factor * h / 2.0;
    let all: Vec<usize> = (0..words.len()).collect();
    let Some(c) = detect_gutter(&rects) else {
        let mut lines = group_band(words, all, band, Region::Full);
        lines.sort_by(line_sort);
        return lines;
    };

    let (lo, hi) = (c - GUTTER_WIDTH / 2.0, c + GUTTER_WIDTH / 2.0);
    let crossing = |r: &Rect| r.x < hi && r.right() > lo;
    let spanning_ids: Vec<usize> = all.iter().copied().filter(|&i| crossing(&rects[i])).collect();
    let mut spanning = group_band(words, spanning_ids, band, Region::Full);

    let mut columns = Vec::new();
    for region in [Region::Left, Region::Right] {
        let ids: Vec<usize> = all
            .iter()
            .copied()
            .filter(|&i| !crossing(&rects[i]))
            .filter(|&i| (region == Region::Left) == (rects[i].center().0 < c))
            .collect();
        columns.extend(group_band(words, ids, band, region));
    }

    // Column fragments level with a spanning line (e.g. the outer words of a
    // centered title) belong to that line.
    let mut kept = Vec::new();
    for line in columns {
        let cy = line.rect.center().1;
        match spanning
            .iter_mut()
            .find(|s| (s.rect.center().1 - cy).abs() < band)
        {
            Some(s) => {
                let mut ids = std::mem::take(&mut s.words);
                ids.extend(line.words);
                *s = make_line(words, ids, Region::Full);
            }
            None => kept.push(line),
        }
    }
    spanning.sort_by(line_sort);

    let key = |line: &Line| -> (usize, u8) {
        let cy = line.rect.center().1;
        let segment = spanning.iter().filter(|s| s.rect.center().1 < cy).count();
        match line.region {
            Region::Left => (segment, 0),
            Region::Right => (segment, 1),
            Region::Full => (segment, 2),
        }
    };
    let mut ordered: Vec<((usize, u8), Line)> = Vec::new();
    for (k, line) in spanning.iter().enumerate() {
        ordered.push(((k, 2), line.clone()));
    }
    for line in kept {
        ordered.push((key(&line), line));
    }
    ordered.sort_by(|(ka, a), (kb, b)| ka.cmp(kb).then(line_sort(a, b)));
    ordered.into_iter().map(|(_, l)| l).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::doc::BBox;

    fn word(text: &str, x: f64, y: f64) -> Word {
        Word {
            text: text.into(),
            bbox: BBox::new(0, x, y, 0.05, 0.01).unwrap(),
        }
    }

    fn texts(words: &[Word], lines: &[Line]) -> Vec<Vec<String>> {
        lines
            .iter()
            .map(|l| l.words.iter().map(|&i| words[i].text.clone()).collect())
            .collect()
    }

    #[test]
    fn same_row_words_form_one_x_ordered_line() {
        let words = vec![word("b", 0.3, 0.1), word("a", 0.1, 0.1)];
        let lines = build_lines(&words, 1.5);
        assert_eq!(texts(&words, &lines), [["a", "b"]]);
    }

    #[test]
    fn distant_rows_form_two_lines() {
        let words = vec![word("low", 0.1, 0.30), word("high", 0.1, 0.10)];
        let lines = build_lines(&words, 1.5);
        assert_eq!(texts(&words, &lines), [["high"], ["low"]]);
    }

    #[test]
    fn single_spaced_lines_stay_apart() {
        // Leading of 1.3x the glyph height.
        let words = vec![word("one", 0.1, 0.100), word("two", 0.1, 0.113)];
        assert_eq!(build_lines(&words, 1.5).len(), 2);
    }

    #[test]
    fn gutter_detection() {
        let mut rects = Vec::new();
        for i in 0..20 {
            let y = 0.1 + 0.02 * i as f64;
            rects.push(Rect::new(0.1, y, 0.3, 0.01));
            rects.push(Rect::new(0.56, y, 0.3, 0.01));
        }
        let c = detect_gutter(&rects).unwrap();
        assert!((0.45..=0.55).contains(&c));
        rects.push(Rect::new(0.1, 0.05, 0.8, 0.01));
        assert!(detect_gutter(&rects).is_some());
        let full: Vec<Rect> = (0..20).map(|i| Rect::new(0.1, 0.1 + 0.02 * i as f64, 0.8, 0.01)).collect();
        assert!(detect_gutter(&full).is_none());
    }

    #[test]
    fn two_columns_read_left_then_right() {
        let mut words = vec![word("Title", 0.45, 0.05)];
        for i in 0..10 {
            let y = 0.1 + 0.02 * i as f64;
            words.push(word(&format!("R{i}"), 0.6, y));
            words.push(word(&format!("L{i}"), 0.1, y));
        }
        let lines = build_lines(&words, 1.5);
        let order: Vec<String> = texts(&words, &lines).into_iter().flatten().collect();
        let mut expected = vec!["Title".to_string()];
        expected.extend((0..10).map(|i| format!("L{i}")));
        expected.extend((0..10).map(|i| format!("R{i}")));
        assert_eq!(order, expected);
        assert_eq!(lines[1].region, Region::Left);
    }
}
