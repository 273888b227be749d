//! Table parsing by cross-referencing cell geometry with extracted words.

use crate::doc::{BBox, Document, Entity, Rect};
use crate::pipeline::RegionHints;
use crate::predict::{entity_region, ImageBox, ImageOutput, ImagePredictor, PredictorError};
use crate::render::{crop_image, encode_png, PageRenderer};

use super::remote_image::{parse_image_response, RemoteImagePredictor};
use super::table::{assign_words_to_cells, grid_to_table_record, CellBox, CropWord, TableGeometry};

/// Minimum intersection over union for a sidecar hint to match a table.
pub const HINT_MATCH_IOU: f64 = 0.5;

pub struct GeometricTableParser {
    hints: Option<RegionHints>,
    detector: Option<RemoteImagePredictor>,
}

fn iou(a: &BBox, b: &BBox) -> f64 {
    if a.page != b.page {
        return 0.0;
    }
    let inter = a.intersection_area(b);
    let union = a.area() + b.area() - inter;
    if union > 0.0 {
        inter / union
    } else {
        0.0
    }
}

/// Build geometry from detection boxes labeled `row`, `column` or `cell r,c`.
pub fn geometry_from_detections(boxes: &[ImageBox]) -> Option<TableGeometry> {
    let mut rows = Vec::new();
    let mut columns = Vec::new();
    let mut cells = Vec::new();
    for b in boxes {
        let label = b.label.trim().to_ascii_lowercase();
        match label.as_str() {
            "row" | "table row" => rows.push(b.rect),
            "column" | "table column" => columns.push(b.rect),
            _ => {
                if let Some(rc) = label.strip_prefix("cell") {
                    let mut parts = rc.split(',').map(|p| p.trim().parse::<usize>());
                    if let (Some(Ok(row)), Some(Ok(col)), None) = (parts.next(), parts.next(), parts.next()) {
                        cells.push(CellBox { row, col, rect: b.rect });
                    }
                }
            }
        }
    }
    if !cells.is_empty() {
        Some(TableGeometry::Cells { cells })
    } else if !rows.is_empty() && !columns.is_empty() {
        Some(TableGeometry::bands(rows, columns))
    } else {
        None
    }
}

/// Words of `doc` intersecting `region`, in reading order, relative to it.
pub fn crop_words(doc: &Document, region: &BBox) -> Vec<CropWord> {
    let Some(words) = doc.layer("words") else {
        return Vec::new();
    };
    let frame = region.rect();
    words
        .entities
        .iter()
        .filter_map(|w| {
            let b = w
                .boxes
                .iter()
                .find(|b| b.page == region.page && b.intersection_area(region) > 0.0)?;
            Some(CropWord {
                text: doc.text_of(w),
                rect: frame.to_inner(&b.rect()),
            })
        })
        .collect()
}

impl GeometricTableParser {
    pub fn new(hints: Option<RegionHints>, detector: Option<RemoteImagePredictor>) -> Self {
        Self { hints, detector }
    }

    fn hinted_geometry(&self, region: &BBox) -> Option<TableGeometry> {
        let hints = self.hints.as_ref()?;
        hints
            .tables
            .iter()
            .filter(|h| h.geometry.is_some())
            .map(|h| (iou(&h.bbox, region), h))
            .filter(|(score, _)| *score >= HINT_MATCH_IOU)
            .max_by(|a, b| a.0.total_cmp(&b.0))
            .map(|(_, h)| {
                let g = h.geometry.as_ref().expect("filtered");
                g.reframe(&h.bbox.rect(), &region.rect())
            })
    }

    fn geometry(
        &self,
        entity: &Entity,
        region: &BBox,
        renderer: &dyn PageRenderer,
        dpi: u32,
    ) -> Result<TableGeometry, PredictorError> {
        if let Some(v) = entity.metadata.get("table_geometry").filter(|v| !v.is_null()) {
            return serde_json::from_value(v.clone())
                .map_err(|e| PredictorError::Failed(format!("invalid table_geometry metadata: {e}")));
        }
        if let Some(g) = self.hinted_geometry(region) {
            return Ok(g);
        }
        if let Some(detector) = &self.detector {
            let page = renderer.render_page(region.page, dpi)?;
            let response = detector.call(encode_png(&crop_image(&page, region)))?;
            let output = parse_image_response(&response)?;
            return geometry_from_detections(output.boxes.as_deref().unwrap_or_default()).ok_or_else(|| {
                PredictorError::InvalidResponse("detection service returned no row, column or cell boxes".into())
            });
        }
        Err(PredictorError::NoGeometry(
            "configure detection_url or regions_path, or supply a region-hint sidecar with cell structure".into(),
        ))
    }

    /// Parse a table region given its crop-relative geometry.
    pub fn parse(
        &self,
        doc: &Document,
        region: &BBox,
        geometry: &TableGeometry,
    ) -> Result<ImageOutput, PredictorError> {
        let words = crop_words(doc, region);
        let assignment =
            assign_words_to_cells(geometry, &words).map_err(|e| PredictorError::Failed(e.to_string()))?;
        let table = grid_to_table_record(&assignment.grid).map_err(|e| PredictorError::Failed(e.to_string()))?;
        let (cells, _, _) = geometry.cells().map_err(|e| PredictorError::Failed(e.to_string()))?;
        let boxes = cells
            .into_iter()
            .map(|c| ImageBox {
                rect: clip_unit(c.rect),
                label: format!("cell {},{}", c.row, c.col),
                score: 1.0,
            })
            .collect();
        Ok(ImageOutput {
            raw_text: None,
            table: Some(table),
            boxes: Some(boxes),
        })
    }
}

fn clip_unit(r: Rect) -> Rect {
    r.intersection(&Rect::new(0.0, 0.0, 1.0, 1.0)).unwrap_or(r)
}

impl ImagePredictor for GeometricTableParser {
    fn process_image(&self, _image: &image::RgbaImage) -> Result<ImageOutput, PredictorError> {
        Err(PredictorError::Failed(
            "the geometric table parser needs document words; use process_entity".into(),
        ))
    }

    fn process_entity(
        &self,
        doc: &Document,
        entity: &Entity,
        renderer: &dyn PageRenderer,
        dpi: u32,
    ) -> Result<ImageOutput, PredictorError> {
        let region =
            entity_region(entity).ok_or_else(|| PredictorError::Failed("entity has no boxes".into()))?;
        let geometry = self.geometry(entity, &region, renderer, dpi)?;
        self.parse(doc, &region, &geometry)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::doc::{PageInfo, Span};
    use crate::pipeline::TableHint;
    use crate::render::LayoutRenderer;
    use std::sync::Arc;

    /// Words a b c d laid out in a 2×2 grid inside the box (0.2, 0.2, 0.4, 0.2).
    fn doc() -> Document {
        let mut d = Document::new(
            "d",
            "a b c d",
            vec![PageInfo {
                index: 0,
                width_pts: 612.0,
                height_pts: 792.0,
            }],
        )
        .unwrap();
        let at = [(0.22, 0.22), (0.42, 0.22), (0.22, 0.32), (0.42, 0.32)];
        d.add_layer(
            "words",
            at.iter()
                .enumerate()
                .map(|(i, &(x, y))| {
                    Entity::new(i as u64)
                        .with_spans(vec![Span::new(2 * i, 2 * i + 1).unwrap()])
                        .with_boxes(vec![BBox::new(0, x, y, 0.02, 0.02).unwrap()])
                })
                .collect(),
        )
        .unwrap();
        d
    }

    fn table_box() -> BBox {
        BBox::new(0, 0.2, 0.2, 0.4, 0.2).unwrap()
    }

    fn halves() -> TableGeometry {
        TableGeometry::bands(
            vec![Rect::new(0.0, 0.0, 1.0, 0.5), Rect::new(0.0, 0.5, 1.0, 0.5)],
            vec![Rect::new(0.0, 0.0, 0.5, 1.0), Rect::new(0.5, 0.0, 0.5, 1.0)],
        )
    }

    fn run(parser: &GeometricTableParser, entity: &Entity) -> Result<ImageOutput, PredictorError> {
        let d = doc();
        let renderer = LayoutRenderer::new(Arc::new(d.clone()));
        parser.process_entity(&d, entity, &renderer, 72)
    }

    #[test]
    fn metadata_geometry() {
        let e = Entity::new(0)
            .with_boxes(vec![table_box()])
            .with_meta("table_geometry", serde_json::to_value(halves()).unwrap());
        let out = run(&GeometricTableParser::new(None, None), &e).unwrap();
        let table = out.table.unwrap();
        assert_eq!(table["a"], ["c"]);
        assert_eq!(table["b"], ["d"]);
        let boxes = out.boxes.unwrap();
        assert_eq!(boxes.len(), 4);
        assert_eq!(boxes[3].label, "cell 1,1");
    }

    #[test]
    fn sidecar_geometry_is_reframed() {
        // Hint box slightly larger than the entity box; still IoU >= 0.5.
        let hint_box = BBox::new(0, 0.2, 0.2, 0.4, 0.22).unwrap();
        let geometry = TableGeometry::bands(
            vec![Rect::new(0.0, 0.0, 1.0, 0.1 / 0.22), Rect::new(0.0, 0.1 / 0.22, 1.0, 0.12 / 0.22)],
            vec![Rect::new(0.0, 0.0, 0.5, 1.0), Rect::new(0.5, 0.0, 0.5, 1.0)],
        );
        let hints = RegionHints {
            tables: vec![TableHint {
                bbox: hint_box,
                geometry: Some(geometry),
            }],
        };
        let e = Entity::new(0).with_boxes(vec![table_box()]);
        let out = run(&GeometricTableParser::new(Some(hints), None), &e).unwrap();
        assert_eq!(out.table.unwrap()["a"], ["c"]);
    }

    #[test]
    fn no_geometry() {
        let e = Entity::new(0).with_boxes(vec![table_box()]);
        assert!(matches!(
            run(&GeometricTableParser::new(None, None), &e),
            Err(PredictorError::NoGeometry(_))
        ));
    }

    #[test]
    fn empty_region_gives_empty_cells() {
        let e = Entity::new(0)
            .with_boxes(vec![BBox::new(0, 0.6, 0.6, 0.2, 0.2).unwrap()])
            .with_meta("table_geometry", serde_json::to_value(halves()).unwrap());
        let out = run(&GeometricTableParser::new(None, None), &e).unwrap();
        assert_eq!(out.boxes.unwrap().len(), 4);
        let table = out.table.unwrap();
        assert_eq!(table.keys().collect::<Vec<_>>(), ["col_1", "col_2"]);
        assert_eq!(table["col_1"], [""]);
    }

    #[test]
    fn detection_labels() {
        let b = |x: f64, label: &str| ImageBox {
            rect: Rect::new(x, 0.0, 0.5, 1.0),
            label: label.into(),
            score: 1.0,
        };
        assert!(matches!(
            geometry_from_detections(&[b(0.0, "cell 0,0"), b(0.5, "cell 0, 1")]),
            Some(TableGeometry::Cells { cells }) if cells.len() == 2
        ));
        assert!(matches!(
            geometry_from_detections(&[b(0.0, "row"), b(0.5, "column")]),
            Some(TableGeometry::Bands { .. })
        ));
        assert!(geometry_from_detections(&[b(0.0, "row")]).is_none());
    }
}
