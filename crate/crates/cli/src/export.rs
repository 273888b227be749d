//! CSV export of parsed tables.

use std::path::{Path, PathBuf};

use layerlab_core::doc::Document;
use layerlab_core::predict::PredictorKind;
use serde_json::Value;

#[derive(Debug, thiserror::Error)]
pub enum ExportError {
    #[error("no parsed tables found")]
    NoTables,
    #[error("invalid table record in {layer}/{id}: {reason}")]
    InvalidTable { layer: String, id: u64, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// A table record as header plus rows.
pub type Grid = (Vec<String>, Vec<Vec<String>>);

fn cell(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        Value::Null => String::new(),
        other => other.to_string(),
    }
}

/// Header and rows of a `{column: [values]}` record.
pub fn record_to_grid(record: &serde_json::Map<String, Value>) -> Result<Grid, String> {
    let header: Vec<String> = record.keys().cloned().collect();
    let columns: Vec<&Vec<Value>> = record
        .values()
        .map(|v| v.as_array().ok_or_else(|| "column is not an array".to_string()))
        .collect::<Result<_, _>>()?;
    let n = columns.first().map_or(0, |c| c.len());
    if columns.iter().any(|c| c.len() != n) {
        return Err("columns differ in length".into());
    }
    let rows = (0..n).map(|r| columns.iter().map(|c| cell(&c[r])).collect()).collect();
    Ok((header, rows))
}

/// RFC 4180 CSV with `\n` line endings, header first.
pub fn grid_to_csv(grid: &Grid) -> Result<Vec<u8>, csv::Error> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(&grid.0)?;
    for row in &grid.1 {
        w.write_record(row)?;
    }
    w.into_inner().map_err(|e| e.into_error().into())
}

/// Every table record in the document's image result layers, in layer
/// then entity order.
pub fn tables(doc: &Document) -> Result<Vec<(String, u64, Grid)>, ExportError> {
    let mut out = Vec::new();
    for layer in doc.layers() {
        if !layer.name.starts_with(PredictorKind::Image.layer_prefix()) {
            continue;
        }
        for e in &layer.entities {
            if let Some(Value::Object(record)) = e.metadata.get("table") {
                let grid = record_to_grid(record).map_err(|reason| ExportError::InvalidTable {
                    layer: layer.name.clone(),
                    id: e.id,
                    reason,
                })?;
                out.push((layer.name.clone(), e.id, grid));
            }
        }
    }
    Ok(out)
}

/// Write one `<doc_id>_<layer>_<entity_id>.csv` per table into `out_dir`.
pub fn export_tables(doc: &Document, out_dir: &Path) -> Result<Vec<PathBuf>, ExportError> {
    let found = tables(doc)?;
    if found.is_empty() {
        return Err(ExportError::NoTables);
    }
    std::fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();
    for (layer, id, grid) in found {
        let path = out_dir.join(format!("{}_{layer}_{id}.csv", doc.doc_id));
        std::fs::write(&path, grid_to_csv(&grid)?)?;
        written.push(path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn record_to_csv_example() {
        let rec = json!({"A": ["1", "2"], "B": ["x", "y"]});
        let grid = record_to_grid(rec.as_object().unwrap()).unwrap();
        assert_eq!(grid_to_csv(&grid).unwrap(), b"A,B\n1,x\n2,y\n");
    }

    #[test]
    fn quoting_follows_rfc4180() {
        let rec = json!({"name, full": ["a \"b\"", "line\nbreak"]});
        let grid = record_to_grid(rec.as_object().unwrap()).unwrap();
        let csv = String::from_utf8(grid_to_csv(&grid).unwrap()).unwrap();
        assert_eq!(csv, "\"name, full\"\n\"a \"\"b\"\"\"\n\"line\nbreak\"\n");
    }

    #[test]
    fn ragged_records_are_rejected() {
        let rec = json!({"A": ["1"], "B": []});
        assert!(record_to_grid(rec.as_object().unwrap()).is_err());
    }
}
