use serde::{Deserialize, Serialize};

use super::DocError;

/// Slack allowed on normalized box bounds to absorb extraction noise.
pub const BOX_EPSILON: f64 = 1e-6;

/// Half-open character interval into a document's symbols.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "(usize, usize)", into = "(usize, usize)")]
pub struct Span {
    start: usize,
    end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Result<Self, DocError> {
        if start >= end {
            return Err(DocError::InvalidSpan { start, end });
        }
        Ok(Self { start, end })
    }

    pub fn start(&self) -> usize {
        self.start
    }

    pub fn end(&self) -> usize {
        self.end
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn overlaps(&self, other: &Span) -> bool {
        self.start < other.end && other.start < self.end
    }

    pub fn contains(&self, other: &Span) -> bool {
        self.start <= other.start && other.end <= self.end
    }
}

impl TryFrom<(usize, usize)> for Span {
    type Error = DocError;

    fn try_from((start, end): (usize, usize)) -> Result<Self, Self::Error> {
        Span::new(start, end)
    }
}

impl From<Span> for (usize, usize) {
    fn from(span: Span) -> Self {
        (span.start, span.end)
    }
}

/// Axis-aligned rectangle in normalized coordinates, without a page.
///
/// Used for crop-relative geometry, where (0, 0) is the top-left corner of the
/// crop and (1, 1) its bottom-right corner.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "(f64, f64, f64, f64)", into = "(f64, f64, f64, f64)")]
pub struct Rect {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl Rect {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Self {
        Self { x, y, w, h }
    }

    pub fn from_corners(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Self {
            x: x0,
            y: y0,
            w: x1 - x0,
            h: y1 - y0,
        }
    }

    pub fn right(&self) -> f64 {
        self.x + self.w
    }

    pub fn bottom(&self) -> f64 {
        self.y + self.h
    }

    pub fn area(&self) -> f64 {
        self.w.max(0.0) * self.h.max(0.0)
    }

    pub fn center(&self) -> (f64, f64) {
        (self.x + self.w / 2.0, self.y + self.h / 2.0)
    }

    pub fn contains_point(&self, x: f64, y: f64) -> bool {
        x >= self.x && x <= self.right() && y >= self.y && y <= self.bottom()
    }

    pub fn intersection(&self, other: &Rect) -> Option<Rect> {
        let x0 = self.x.max(other.x);
        let y0 = self.y.max(other.y);
        let x1 = self.right().min(other.right());
        let y1 = self.bottom().min(other.bottom());
        (x1 > x0 && y1 > y0).then(|| Rect::from_corners(x0, y0, x1, y1))
    }

    pub fn intersection_area(&self, other: &Rect) -> f64 {
        self.intersection(other).map_or(0.0, |r| r.area())
    }

    pub fn union(&self, other: &Rect) -> Rect {
        Rect::from_corners(
            self.x.min(other.x),
            self.y.min(other.y),
            self.right().max(other.right()),
            self.bottom().max(other.bottom()),
        )
    }

    /// Map a rectangle expressed relative to `self` into the frame `self` lives in.
    pub fn to_outer(&self, inner: &Rect) -> Rect {
        Rect::new(
            self.x + inner.x * self.w,
            self.y + inner.y * self.h,
            inner.w * self.w,
            inner.h * self.h,
        )
    }

    /// Inverse of [`Rect::to_outer`].
    pub fn to_inner(&self, outer: &Rect) -> Rect {
        Rect::new(
            (outer.x - self.x) / self.w,
            (outer.y - self.y) / self.h,
            outer.w / self.w,
            outer.h / self.h,
        )
    }
}

impl From<(f64, f64, f64, f64)> for Rect {
    fn from((x, y, w, h): (f64, f64, f64, f64)) -> Self {
        Rect { x, y, w, h }
    }
}

impl From<Rect> for (f64, f64, f64, f64) {
    fn from(r: Rect) -> Self {
        (r.x, r.y, r.w, r.h)
    }
}

/// Page-anchored box in normalized page coordinates, origin top-left.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(
    try_from = "(u32, f64, f64, f64, f64)",
    into = "(u32, f64, f64, f64, f64)"
)]
pub struct BBox {
    pub page: u32,
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BBox {
    pub fn new(page: u32, x: f64, y: f64, w: f64, h: f64) -> Result<Self, DocError> {
        let b = Self { page, x, y, w, h };
        b.check()?;
        Ok(b)
    }

    pub fn from_rect(page: u32, rect: Rect) -> Result<Self, DocError> {
        Self::new(page, rect.x, rect.y, rect.w, rect.h)
    }

    /// Build from corner coordinates, clamping into the unit square.
    /// Returns `None` when nothing of positive area remains.
    pub fn clamped(page: u32, x0: f64, y0: f64, x1: f64, y1: f64) -> Option<Self> {
        let x0 = x0.clamp(0.0, 1.0);
        let y0 = y0.clamp(0.0, 1.0);
        let x1 = x1.clamp(0.0, 1.0);
        let y1 = y1.clamp(0.0, 1.0);
        (x1 > x0 && y1 > y0).then(|| Self {
            page,
            x: x0,
            y: y0,
            w: x1 - x0,
            h: y1 - y0,
        })
    }

    pub(crate) fn check(&self) -> Result<(), DocError> {
        let finite = [self.x, self.y, self.w, self.h].iter().all(|v| v.is_finite());
        let ok = finite
            && (0.0..=1.0).contains(&self.x)
            && (0.0..=1.0).contains(&self.y)
            && self.w > 0.0
            && self.h > 0.0
            && self.x + self.w <= 1.0 + BOX_EPSILON
            && self.y + self.h <= 1.0 + BOX_EPSILON;
        if ok {
            Ok(())
        } else {
            Err(DocError::InvalidBox(*self))
        }
    }

    pub fn rect(&self) -> Rect {
        Rect::new(self.x, self.y, self.w, self.h)
    }

    pub fn right(&self) -> f64 {
        self.x + self.w
    }

    pub fn bottom(&self) -> f64 {
        self.y + self.h
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn center(&self) -> (f64, f64) {
        self.rect().center()
    }

    pub fn contains_point(&self, x: f64, y: f64) -> bool {
        self.rect().contains_point(x, y)
    }

    /// Smallest box on the same page enclosing both. Pages must match.
    pub fn union(&self, other: &BBox) -> BBox {
        debug_assert_eq!(self.page, other.page);
        let r = self.rect().union(&other.rect());
        BBox {
            page: self.page,
            x: r.x,
            y: r.y,
            w: r.w,
            h: r.h,
        }
    }

    pub fn intersection_area(&self, other: &BBox) -> f64 {
        if self.page != other.page {
            return 0.0;
        }
        self.rect().intersection_area(&other.rect())
    }

    /// Whether `other` lies inside `self`, allowing [`BOX_EPSILON`] slack.
    pub fn contains_box(&self, other: &BBox) -> bool {
        self.page == other.page
            && other.x >= self.x - BOX_EPSILON
            && other.y >= self.y - BOX_EPSILON
            && other.right() <= self.right() + BOX_EPSILON
            && other.bottom() <= self.bottom() + BOX_EPSILON
    }
}

impl TryFrom<(u32, f64, f64, f64, f64)> for BBox {
    type Error = DocError;

    fn try_from((page, x, y, w, h): (u32, f64, f64, f64, f64)) -> Result<Self, Self::Error> {
        BBox::new(page, x, y, w, h)
    }
}

impl From<BBox> for (u32, f64, f64, f64, f64) {
    fn from(b: BBox) -> Self {
        (b.page, b.x, b.y, b.w, b.h)
    }
}

/// Union of all boxes, grouped per page, in page order.
pub fn union_per_page(boxes: &[BBox]) -> Vec<BBox> {
    let mut out: Vec<BBox> = Vec::new();
    for b in boxes {
        match out.iter_mut().find(|u| u.page == b.page) {
            Some(u) => *u = u.union(b),
            None => out.push(*b),
        }
    }
    out.sort_by_key(|b| b.page);
    out
}
