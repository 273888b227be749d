//! Page rasterization and entity crops.

use std::sync::Arc;

use hayro::hayro_interpret::hayro_syntax::Pdf;
use hayro::hayro_interpret::util::TransformExt;
use hayro::hayro_interpret::InterpreterSettings;
use hayro::kurbo::Affine;
use hayro::vello_cpu::color::palette::css::WHITE;
use hayro::vello_cpu::{Pixmap, RasterizerSettings, RenderContext, Resources, TargetInit};
use hayro::{RenderCache, RenderSettings};
use image::{Rgba, RgbaImage};

use crate::doc::{BBox, Document};

pub const MIN_DPI: u32 = 72;
pub const MAX_DPI: u32 = 600;

#[derive(Debug, thiserror::Error)]
pub enum RenderError {
    #[error("page {page} does not exist (document has {pages} pages)")]
    PageOutOfRange { page: u32, pages: usize },
    #[error("dpi {0} outside [72, 600]")]
    InvalidDpi(u32),
    #[error("cannot open PDF for rendering")]
    InvalidPdf,
    #[error("page too large to render at {0} dpi")]
    TooLarge(u32),
}

/// Pixel size of a page of `pts` points at `dpi`.
pub fn pixel_extent(pts: f64, dpi: u32) -> u32 {
    ((pts * dpi as f64 / 72.0).round() as u32).max(1)
}

/// Rasterizes document pages to RGBA bitmaps.
pub trait PageRenderer: Send + Sync {
    fn page_count(&self) -> usize;
    fn render_page(&self, page: u32, dpi: u32) -> Result<RgbaImage, RenderError>;
}

fn check_dpi(dpi: u32) -> Result<(), RenderError> {
    if (MIN_DPI..=MAX_DPI).contains(&dpi) {
        Ok(())
    } else {
        Err(RenderError::InvalidDpi(dpi))
    }
}

/// Renders pages of the original PDF.
#[derive(Clone)]
pub struct PdfRenderer {
    bytes: Arc<Vec<u8>>,
    pages: usize,
}

impl PdfRenderer {
    pub fn new(bytes: Vec<u8>) -> Result<Self, RenderError> {
        let pdf = Pdf::new(bytes.clone()).map_err(|_| RenderError::InvalidPdf)?;
        let pages = pdf.pages().len();
        Ok(Self {
            bytes: Arc::new(bytes),
            pages,
        })
    }
}

impl PageRenderer for PdfRenderer {
    fn page_count(&self) -> usize {
        self.pages
    }

    fn render_page(&self, page: u32, dpi: u32) -> Result<RgbaImage, RenderError> {
        check_dpi(dpi)?;
        let pdf = Pdf::new(self.bytes.as_ref().clone()).map_err(|_| RenderError::InvalidPdf)?;
        let pages = pdf.pages();
        let p = pages.get(page as usize).ok_or(RenderError::PageOutOfRange {
            page,
            pages: pages.len(),
        })?;
        let (w_pts, h_pts) = p.render_dimensions();
        let (w, h) = (pixel_extent(w_pts as f64, dpi), pixel_extent(h_pts as f64, dpi));
        let (w16, h16) = (
            u16::try_from(w).map_err(|_| RenderError::TooLarge(dpi))?,
            u16::try_from(h).map_err(|_| RenderError::TooLarge(dpi))?,
        );
        let mut ctx = RenderContext::new(w16, h16);
        let transform = Affine::scale_non_uniform(w as f64 / w_pts as f64, h as f64 / h_pts as f64)
            * p.initial_transform(true).to_kurbo();
        hayro::render_into(
            p,
            &RenderCache::new(),
            &InterpreterSettings::default(),
            &RenderSettings::default(),
            &mut ctx,
            transform,
        );
        ctx.flush();
        let mut pixmap = Pixmap::new(w16, h16);
        ctx.render_with(
            &mut pixmap,
            &mut Resources::default(),
            RasterizerSettings {
                target_init: TargetInit::Clear(WHITE),
                ..Default::default()
            },
        );
        // The background is opaque, so premultiplied and straight alpha agree.
        Ok(RgbaImage::from_raw(w, h, pixmap.data_as_u8_slice().to_vec())
            .expect("pixmap matches its dimensions"))
    }
}

/// Draws word boxes from a document; used when the original PDF is not
/// available.
pub struct LayoutRenderer {
    doc: Arc<Document>,
}

impl LayoutRenderer {
    pub fn new(doc: Arc<Document>) -> Self {
        Self { doc }
    }
}

impl PageRenderer for LayoutRenderer {
    fn page_count(&self) -> usize {
        self.doc.pages.len()
    }

    fn render_page(&self, page: u32, dpi: u32) -> Result<RgbaImage, RenderError> {
        check_dpi(dpi)?;
        let info = self
            .doc
            .pages
            .get(page as usize)
            .ok_or(RenderError::PageOutOfRange {
                page,
                pages: self.doc.pages.len(),
            })?;
        let (w, h) = (pixel_extent(info.width_pts, dpi), pixel_extent(info.height_pts, dpi));
        let mut img = RgbaImage::from_pixel(w, h, Rgba([255, 255, 255, 255]));
        if let Some(words) = self.doc.layer("words") {
            for b in words.entities.iter().flat_map(|e| &e.boxes).filter(|b| b.page == page) {
                let (x0, y0, cw, ch) = pixel_rect(b, w, h);
                for y in y0..y0 + ch {
                    for x in x0..x0 + cw {
                        img.put_pixel(x, y, Rgba([190, 190, 190, 255]));
                    }
                }
            }
        }
        Ok(img)
    }
}

/// Pixel rectangle (x, y, w, h) of a box on a `page_w × page_h` image; at
/// least one pixel in each direction and always inside the image.
pub fn pixel_rect(b: &BBox, page_w: u32, page_h: u32) -> (u32, u32, u32, u32) {
    let axis = |start: f64, len: f64, total: u32| {
        let p0 = ((start * total as f64).round() as u32).min(total - 1);
        let l = ((len * total as f64).round() as u32).max(1).min(total - p0);
        (p0, l)
    };
    let (x, cw) = axis(b.x, b.w, page_w);
    let (y, ch) = axis(b.y, b.h, page_h);
    (x, y, cw, ch)
}

/// Expand a box by `pad` (normalized units) on every side, clamped to the page.
pub fn padded(b: &BBox, pad: f64) -> BBox {
    BBox::clamped(b.page, b.x - pad, b.y - pad, b.right() + pad, b.bottom() + pad).unwrap_or(*b)
}

/// Crop the region of `b` (expanded by `pad`) from its rendered page.
pub fn crop_box(
    renderer: &dyn PageRenderer,
    b: &BBox,
    dpi: u32,
    pad: f64,
) -> Result<RgbaImage, RenderError> {
    let page = renderer.render_page(b.page, dpi)?;
    Ok(crop_image(&page, &padded(b, pad)))
}

pub fn crop_image(page: &RgbaImage, b: &BBox) -> RgbaImage {
    let (x, y, w, h) = pixel_rect(b, page.width(), page.height());
    image::imageops::crop_imm(page, x, y, w, h).to_image()
}

pub fn encode_png(img: &RgbaImage) -> Vec<u8> {
    let mut out = std::io::Cursor::new(Vec::new());
    img.write_to(&mut out, image::ImageFormat::Png)
        .expect("PNG encoding into memory cannot fail");
    out.into_inner()
}
