//! Table geometry, word-to-cell assignment and header handling.

use std::collections::HashSet;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::doc::Rect;

/// Column name → cell values, all lists of equal length.
pub type TableRecord = IndexMap<String, Vec<String>>;

/// Minimum fraction of a word's area a cell must cover to receive the word.
pub const CELL_OVERLAP_THRESHOLD: f64 = 0.5;
const TIE_EPSILON: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TableError {
    #[error("degenerate table geometry: {0}")]
    DegenerateGeometry(String),
    #[error("empty grid")]
    EmptyGrid,
}

/// A cell box with its grid position, serialized as `[row, col, x, y, w, h]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "(usize, usize, f64, f64, f64, f64)", into = "(usize, usize, f64, f64, f64, f64)")]
pub struct CellBox {
    pub row: usize,
    pub col: usize,
    pub rect: Rect,
}

impl From<(usize, usize, f64, f64, f64, f64)> for CellBox {
    fn from((row, col, x, y, w, h): (usize, usize, f64, f64, f64, f64)) -> Self {
        CellBox {
            row,
            col,
            rect: Rect::new(x, y, w, h),
        }
    }
}

impl From<CellBox> for (usize, usize, f64, f64, f64, f64) {
    fn from(c: CellBox) -> Self {
        (c.row, c.col, c.rect.x, c.rect.y, c.rect.w, c.rect.h)
    }
}

/// Crop-relative table structure: either row and column bands, or explicit
/// cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TableGeometry {
    Bands { rows: Vec<Rect>, columns: Vec<Rect> },
    Cells { cells: Vec<CellBox> },
}

impl TableGeometry {
    /// Row and column bands, sorted by y and x respectively.
    pub fn bands(mut rows: Vec<Rect>, mut columns: Vec<Rect>) -> Self {
        rows.sort_by(|a, b| a.y.total_cmp(&b.y));
        columns.sort_by(|a, b| a.x.total_cmp(&b.x));
        TableGeometry::Bands { rows, columns }
    }

    /// Re-express the geometry relative to a different crop. Both frames are
    /// given in the same outer coordinate system.
    pub fn reframe(&self, from: &Rect, to: &Rect) -> TableGeometry {
        let map = |r: &Rect| to.to_inner(&from.to_outer(r));
        match self {
            TableGeometry::Bands { rows, columns } => TableGeometry::Bands {
                rows: rows.iter().map(map).collect(),
                columns: columns.iter().map(map).collect(),
            },
            TableGeometry::Cells { cells } => TableGeometry::Cells {
                cells: cells
                    .iter()
                    .map(|c| CellBox {
                        rect: map(&c.rect),
                        ..*c
                    })
                    .collect(),
            },
        }
    }

    /// All cells sorted by (row, col), plus the grid dimensions.
    pub fn cells(&self) -> Result<(Vec<CellBox>, usize, usize), TableError> {
        let mut cells = match self {
            TableGeometry::Bands { rows, columns } => {
                let mut rows = rows.clone();
                let mut columns = columns.clone();
                rows.sort_by(|a, b| a.y.total_cmp(&b.y));
                columns.sort_by(|a, b| a.x.total_cmp(&b.x));
                let mut cells = Vec::new();
                for (r, row) in rows.iter().enumerate() {
                    for (c, col) in columns.iter().enumerate() {
                        let rect = Rect::from_corners(col.x, row.y, col.right(), row.bottom());
                        cells.push(CellBox { row: r, col: c, rect });
                    }
                }
                cells
            }
            TableGeometry::Cells { cells } => {
                let mut seen = HashSet::new();
                for c in cells {
                    if !seen.insert((c.row, c.col)) {
                        return Err(TableError::DegenerateGeometry(format!(
                            "duplicate cell ({}, {})",
                            c.row, c.col
                        )));
                    }
                }
                cells.clone()
            }
        };
        if cells.is_empty() {
            return Err(TableError::DegenerateGeometry("no cells".into()));
        }
        if let Some(c) = cells
            .iter()
            .find(|c| !(c.rect.w > 0.0 && c.rect.h > 0.0 && c.rect.area().is_finite()))
        {
            return Err(TableError::DegenerateGeometry(format!(
                "cell ({}, {}) has zero area",
                c.row, c.col
            )));
        }
        cells.sort_by_key(|c| (c.row, c.col));
        let rows = cells.iter().map(|c| c.row).max().unwrap() + 1;
        let cols = cells.iter().map(|c| c.col).max().unwrap() + 1;
        Ok((cells, rows, cols))
    }
}

/// A word positioned in crop-relative coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct CropWord {
    pub text: String,
    pub rect: Rect,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellAssignment {
    /// Cell texts, `rows × cols`; cells without words are empty strings.
    pub grid: Vec<Vec<String>>,
    /// Cell of each input word, `None` when unassigned.
    pub word_cells: Vec<Option<(usize, usize)>>,
    /// Indices of words not assigned to any cell.
    pub unassigned: Vec<usize>,
}

fn overlap_ratio(word: &Rect, cell: &Rect) -> f64 {
    let area = word.area();
    if area > 0.0 {
        word.intersection_area(cell) / area
    } else {
        let (cx, cy) = word.center();
        if cell.contains_point(cx, cy) {
            1.0
        } else {
            0.0
        }
    }
}

/// Assign each word to the cell covering the largest fraction of its area,
/// if that fraction is at least [`CELL_OVERLAP_THRESHOLD`]. Ties go to the
/// lower row, then the lower column. Words in a cell are joined with single
/// spaces in input order.
pub fn assign_words_to_cells(
    geometry: &TableGeometry,
    words: &[CropWord],
) -> Result<CellAssignment, TableError> {
    let (cells, rows, cols) = geometry.cells()?;
    let mut texts: Vec<Vec<Vec<&str>>> = vec![vec![Vec::new(); cols]; rows];
    let mut word_cells = Vec::with_capacity(words.len());
    let mut unassigned = Vec::new();
    for (wi, word) in words.iter().enumerate() {
        let mut best: Option<(f64, usize, usize)> = None;
        for cell in &cells {
            let ratio = overlap_ratio(&word.rect, &cell.rect);
            if best.is_none_or(|(b, _, _)| ratio > b + TIE_EPSILON) {
                best = Some((ratio, cell.row, cell.col));
            }
        }
        match best {
            Some((ratio, r, c)) if ratio >= CELL_OVERLAP_THRESHOLD - TIE_EPSILON => {
                texts[r][c].push(&word.text);
                word_cells.push(Some((r, c)));
            }
            _ => {
                word_cells.push(None);
                unassigned.push(wi);
            }
        }
    }
    let grid = texts
        .into_iter()
        .map(|row| row.into_iter().map(|cell| cell.join(" ")).collect())
        .collect();
    Ok(CellAssignment {
        grid,
        word_cells,
        unassigned,
    })
}

/// Convert a grid to a record keyed by the first row. Empty header names
/// become `col_j` (1-based) and repeats of a name become `name_2`, `name_3`,
/// and so on.
pub fn grid_to_table_record(grid: &[Vec<String>]) -> Result<TableRecord, TableError> {
    let Some(header) = grid.first() else {
        return Err(TableError::EmptyGrid);
    };
    let width = grid.iter().map(Vec::len).max().unwrap_or(0);
    if width == 0 {
        return Err(TableError::EmptyGrid);
    }
    let mut names: Vec<String> = Vec::with_capacity(width);
    let mut taken: HashSet<String> = HashSet::new();
    for j in 0..width {
        let raw = header.get(j).map(|s| s.trim()).unwrap_or("");
        let base = if raw.is_empty() {
            format!("col_{}", j + 1)
        } else {
            raw.to_string()
        };
        let mut name = base.clone();
        let mut k = 1;
        while taken.contains(&name) {
            k += 1;
            name = format!("{base}_{k}");
        }
        taken.insert(name.clone());
        names.push(name);
    }
    let mut record = TableRecord::new();
    for (j, name) in names.into_iter().enumerate() {
        let values = grid[1..]
            .iter()
            .map(|row| row.get(j).cloned().unwrap_or_default())
            .collect();
        record.insert(name, values);
    }
    Ok(record)
}
