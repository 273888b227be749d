//! Region-hint sidecar files (`<name>.regions.json`).

use serde::Deserialize;

use crate::builtin::table::TableGeometry;
use crate::doc::BBox;

#[derive(Debug, thiserror::Error)]
pub enum HintError {
    #[error("invalid region hints: {0}")]
    Invalid(String),
}

/// A hinted table region, optionally with crop-relative cell structure.
#[derive(Debug, Clone, PartialEq)]
pub struct TableHint {
    pub bbox: BBox,
    pub geometry: Option<TableGeometry>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RegionHints {
    pub tables: Vec<TableHint>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RawTable {
    Plain(BBox),
    Detailed {
        #[serde(rename = "box")]
        bbox: BBox,
        #[serde(flatten)]
        geometry: Option<TableGeometry>,
    },
}

#[derive(Deserialize)]
struct RawHints {
    #[serde(default)]
    tables: Vec<serde_json::Value>,
}

impl RegionHints {
    /// Parse a sidecar. Each `tables` element is either `[page, x, y, w, h]`
    /// or an object `{"box": [page, x, y, w, h]}` with optional `rows` and
    /// `columns`, or `cells`, relative to the box.
    pub fn from_json(text: &str) -> Result<Self, HintError> {
        let raw: RawHints =
            serde_json::from_str(text).map_err(|e| HintError::Invalid(e.to_string()))?;
        let tables = raw
            .tables
            .into_iter()
            .enumerate()
            .map(|(i, v)| {
                let t: RawTable = serde_json::from_value(v)
                    .map_err(|e| HintError::Invalid(format!("tables[{i}]: {e}")))?;
                Ok(match t {
                    RawTable::Plain(bbox) => TableHint { bbox, geometry: None },
                    RawTable::Detailed { bbox, geometry } => TableHint { bbox, geometry },
                })
            })
            .collect::<Result<_, HintError>>()?;
        Ok(RegionHints { tables })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plain_and_detailed_forms() {
        let hints = RegionHints::from_json(
            r#"{"tables": [[0, 0.1, 0.2, 0.5, 0.3],
                {"box": [1, 0.1, 0.1, 0.8, 0.2], "rows": [[0,0,1,0.5],[0,0.5,1,0.5]], "columns": [[0,0,0.5,1],[0.5,0,0.5,1]]},
                {"box": [0, 0.1, 0.6, 0.2, 0.2]}]}"#,
        )
        .unwrap();
        assert_eq!(hints.tables.len(), 3);
        assert!(hints.tables[0].geometry.is_none());
        assert_eq!(hints.tables[1].bbox.page, 1);
        assert!(matches!(hints.tables[1].geometry, Some(TableGeometry::Bands { .. })));
        assert!(hints.tables[2].geometry.is_none());
    }

    #[test]
    fn invalid_input() {
        assert!(RegionHints::from_json("{").is_err());
        assert!(RegionHints::from_json(r#"{"tables": [[0, 0.5, 0.5, 0.9, 0.9]]}"#).is_err());
        assert_eq!(RegionHints::from_json("{}").unwrap(), RegionHints::default());
    }
}
