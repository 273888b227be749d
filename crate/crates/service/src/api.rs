//! HTTP handlers.

use std::collections::BTreeMap;

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Multipart, Path, Query, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use layerlab_core::doc::{union_per_page, Document};
use layerlab_core::pipeline::{doc_id_for, probe_pdf, ExtractError, PipelineConfig, RegionHints};
use layerlab_core::predict::{prepare_predictors, PredictorSpec, RegistryError};
use layerlab_core::render::{crop_box, encode_png, pixel_extent, PageRenderer, PdfRenderer, MAX_DPI, MIN_DPI};
use serde::Deserialize;
use tower_http::limit::RequestBodyLimitLayer;
use serde_json::{json, Value};

use crate::error::ApiError;
use crate::jobs::ProcessingJob;
use crate::{views, AppState};

pub const DEFAULT_DPI: u32 = 150;
pub const DEFAULT_PAD: f64 = 0.01;
/// Response header carrying the number of pages a cropped entity spans.
pub const PAGE_COUNT_HEADER: &str = "x-page-count";

type ApiResult<T> = Result<T, ApiError>;

pub fn routes(state: AppState) -> Router {
    let body_limit = state.config.max_upload_bytes + 1024 * 1024;
    Router::new()
        .route("/documents", post(upload).get(list_documents))
        .route("/predictors", get(list_predictors))
        .route("/documents/{doc_id}", get(get_document))
        .route("/documents/{doc_id}/process", post(process))
        .route("/documents/{doc_id}/layers", get(list_layers))
        .route("/documents/{doc_id}/layers/{name}", get(get_layer))
        .route("/documents/{doc_id}/pages/{n}/image", get(page_image))
        .route("/documents/{doc_id}/entities/{layer}/{id}/crop", get(entity_crop))
        .route("/documents/{doc_id}/entities/{layer}/{id}/annotations", get(entity_annotations))
        .route("/documents/{doc_id}/summary", get(summary))
        .route("/jobs/{job_id}", get(get_job))
        .layer(DefaultBodyLimit::max(body_limit))
        .layer(RequestBodyLimitLayer::new(body_limit))
        .with_state(state)
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> ApiResult<T> + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f).await.map_err(ApiError::internal)?
}

fn require_doc(state: &AppState, doc_id: &str) -> ApiResult<()> {
    if state.store.has_document(doc_id) {
        Ok(())
    } else {
        Err(ApiError::not_found(format!("unknown document {doc_id}")))
    }
}

fn load_parsed(state: &AppState, doc_id: &str) -> ApiResult<Document> {
    require_doc(state, doc_id)?;
    state
        .store
        .load_document(doc_id)
        .map_err(ApiError::internal)?
        .ok_or_else(|| ApiError::not_processed(doc_id))
}

fn json_bytes(bytes: Vec<u8>) -> Response {
    ([(header::CONTENT_TYPE, "application/json")], bytes).into_response()
}

fn png(bytes: Vec<u8>) -> Response {
    ([(header::CONTENT_TYPE, "image/png")], bytes).into_response()
}

fn multipart_error(e: axum::extract::multipart::MultipartError) -> ApiError {
    if e.status() == StatusCode::PAYLOAD_TOO_LARGE {
        ApiError::new(StatusCode::PAYLOAD_TOO_LARGE, "too_large", "upload exceeds the size limit")
    } else {
        ApiError::bad_request("invalid_upload", e.body_text())
    }
}

/// Multipart upload: the PDF in field `file` (or any file field), and an
/// optional region-hint sidecar in field `regions`.
async fn upload(State(state): State<AppState>, mut multipart: Multipart) -> ApiResult<(StatusCode, Json<Value>)> {
    let mut pdf: Option<(String, Bytes)> = None;
    let mut regions: Option<String> = None;
    while let Some(field) = multipart.next_field().await.map_err(multipart_error)? {
        let name = field.name().unwrap_or_default().to_string();
        let filename = field.file_name().map(str::to_string);
        if name == "regions" {
            regions = Some(field.text().await.map_err(multipart_error)?);
        } else if pdf.is_none() && (name == "file" || filename.is_some()) {
            let bytes = field.bytes().await.map_err(multipart_error)?;
            pdf = Some((filename.unwrap_or_else(|| "upload.pdf".into()), bytes));
        }
    }
    let (filename, bytes) = pdf.ok_or_else(|| ApiError::bad_request("missing_file", "no file field in upload"))?;
    if bytes.len() > state.config.max_upload_bytes {
        return Err(ApiError::new(
            StatusCode::PAYLOAD_TOO_LARGE,
            "too_large",
            format!("upload of {} bytes exceeds the limit of {} bytes", bytes.len(), state.config.max_upload_bytes),
        ));
    }
    if let Some(text) = &regions {
        RegionHints::from_json(text).map_err(|e| ApiError::bad_request("invalid_regions", e.to_string()))?;
    }
    let store = state.store.clone();
    let (doc_id, created) = blocking(move || {
        probe_pdf(&bytes).map_err(|e| match e {
            ExtractError::NotAPdf(_) => ApiError::bad_request("not_a_pdf", e.to_string()),
            ExtractError::EncryptedPdf => ApiError::bad_request("encrypted_pdf", e.to_string()),
        })?;
        let doc_id = doc_id_for(&bytes);
        let created = store.save_original(&doc_id, &bytes, &filename).map_err(ApiError::internal)?;
        if let Some(text) = regions {
            store.save_regions(&doc_id, &text).map_err(ApiError::internal)?;
        }
        Ok((doc_id, created))
    })
    .await?;
    if created {
        tracing::info!("stored document {doc_id}");
        state.store.log_event(&format!("document {doc_id} uploaded"));
    }
    let status = if created { StatusCode::CREATED } else { StatusCode::OK };
    Ok((status, Json(json!({"doc_id": doc_id, "created": created}))))
}

async fn list_documents(State(state): State<AppState>) -> ApiResult<Json<Value>> {
    let ids = state.store.list_documents().map_err(ApiError::internal)?;
    let docs: Vec<Value> = ids
        .iter()
        .map(|id| {
            json!({
                "doc_id": id,
                "source_filename": state.store.upload_info(id).source_filename,
                "parsed": state.store.document_path(id).is_file(),
            })
        })
        .collect();
    Ok(Json(Value::Array(docs)))
}

async fn list_predictors(State(state): State<AppState>) -> Json<Value> {
    Json(json!(state.registry.list_predictors()))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ProcessRequest {
    #[serde(default)]
    predictors: Vec<Value>,
    #[serde(default)]
    pipeline_config: Option<Value>,
}

async fn process(
    State(state): State<AppState>,
    Path(doc_id): Path<String>,
    body: Bytes,
) -> ApiResult<(StatusCode, Json<Value>)> {
    require_doc(&state, &doc_id)?;
    let request: ProcessRequest = if body.iter().all(u8::is_ascii_whitespace) {
        ProcessRequest {
            predictors: Vec::new(),
            pipeline_config: None,
        }
    } else {
        serde_json::from_slice(&body).map_err(|e| ApiError::bad_request("invalid_request", e.to_string()))?
    };

    let mut fields = BTreeMap::new();
    let pipeline_config = match request.pipeline_config {
        None | Some(Value::Null) => PipelineConfig::default(),
        Some(v) => match serde_json::from_value::<PipelineConfig>(v) {
            Ok(cfg) => {
                if let Err(e) = cfg.validate() {
                    fields.insert("pipeline_config".to_string(), e.to_string());
                }
                cfg
            }
            Err(e) => {
                fields.insert("pipeline_config".to_string(), e.to_string());
                PipelineConfig::default()
            }
        },
    };

    let mut specs = Vec::new();
    for (i, raw) in request.predictors.into_iter().enumerate() {
        match serde_json::from_value::<PredictorSpec>(raw) {
            Ok(mut spec) => {
                if let Some(descriptor) = state.registry.descriptor(&spec.name) {
                    if let Err(key) = state.secrets.absorb(&mut spec, descriptor) {
                        fields.insert(format!("predictors[{i}].{key}"), "expected a non-empty string".into());
                    }
                }
                specs.push(spec);
            }
            Err(e) => {
                fields.insert(format!("predictors[{i}]"), e.to_string());
            }
        }
    }
    if !fields.is_empty() {
        return Err(ApiError::validation(fields));
    }

    let registry = state.registry.clone();
    let secrets = state.secrets.clone();
    let checked = specs.clone();
    let prepared = blocking(move || {
        prepare_predictors(&registry, &checked, secrets.as_ref()).map_err(|e| match e {
            RegistryError::ConfigValidation { fields } => ApiError::validation(fields),
            other => ApiError::internal(other),
        })
    })
    .await?;

    let job = ProcessingJob::new(&doc_id, specs, pipeline_config);
    let job_id = job.job_id.clone();
    state.jobs.submit(job, prepared).map_err(ApiError::internal)?;
    Ok((StatusCode::ACCEPTED, Json(json!({"job_id": job_id, "doc_id": doc_id}))))
}

async fn get_job(State(state): State<AppState>, Path(job_id): Path<String>) -> ApiResult<Json<ProcessingJob>> {
    if let Some(job) = state.jobs.get(&job_id) {
        return Ok(Json(job));
    }
    state
        .store
        .find_job(&job_id)
        .map_err(ApiError::internal)?
        .map(Json)
        .ok_or_else(|| ApiError::not_found(format!("unknown job {job_id}")))
}

async fn get_document(State(state): State<AppState>, Path(doc_id): Path<String>) -> ApiResult<Response> {
    require_doc(&state, &doc_id)?;
    let bytes = state
        .store
        .document_bytes(&doc_id)
        .map_err(ApiError::internal)?
        .ok_or_else(|| ApiError::not_processed(&doc_id))?;
    Ok(json_bytes(bytes))
}

async fn list_layers(State(state): State<AppState>, Path(doc_id): Path<String>) -> ApiResult<Json<Vec<String>>> {
    let doc = load_parsed(&state, &doc_id)?;
    Ok(Json(doc.layer_names().map(str::to_string).collect()))
}

async fn get_layer(State(state): State<AppState>, Path((doc_id, name)): Path<(String, String)>) -> ApiResult<Response> {
    let doc = load_parsed(&state, &doc_id)?;
    let layer = doc
        .layer(&name)
        .ok_or_else(|| ApiError::not_found(format!("unknown layer {name}")))?;
    let body = json!({"name": layer.name, "entities": layer.entities});
    Ok(json_bytes(serde_json::to_vec(&body).map_err(ApiError::internal)?))
}

#[derive(Deserialize)]
struct ImageParams {
    dpi: Option<u32>,
    pad: Option<f64>,
}

fn check_dpi(dpi: Option<u32>) -> ApiResult<u32> {
    let dpi = dpi.unwrap_or(DEFAULT_DPI);
    if (MIN_DPI..=MAX_DPI).contains(&dpi) {
        Ok(dpi)
    } else {
        Err(ApiError::bad_request(
            "invalid_parameter",
            format!("dpi must be within [{MIN_DPI}, {MAX_DPI}]"),
        ))
    }
}

/// Width and height from a PNG header.
fn png_size(bytes: &[u8]) -> Option<(u32, u32)> {
    let w = u32::from_be_bytes(bytes.get(16..20)?.try_into().ok()?);
    let h = u32::from_be_bytes(bytes.get(20..24)?.try_into().ok()?);
    Some((w, h))
}

async fn page_image(
    State(state): State<AppState>,
    Path((doc_id, page)): Path<(String, u32)>,
    Query(params): Query<ImageParams>,
) -> ApiResult<Response> {
    let dpi = check_dpi(params.dpi)?;
    let doc = load_parsed(&state, &doc_id)?;
    let info = *doc
        .pages
        .get(page as usize)
        .ok_or_else(|| ApiError::not_found(format!("page {page} does not exist")))?;
    let expected = (pixel_extent(info.width_pts, dpi), pixel_extent(info.height_pts, dpi));
    let store = state.store.clone();
    let bytes = blocking(move || {
        if let Ok(cached) = std::fs::read(store.page_path(&doc_id, page)) {
            if png_size(&cached) == Some(expected) {
                return Ok(cached);
            }
        }
        let pdf = store.load_original(&doc_id).map_err(ApiError::internal)?;
        let renderer = PdfRenderer::new(pdf).map_err(ApiError::internal)?;
        let img = renderer.render_page(page, dpi).map_err(ApiError::internal)?;
        Ok(encode_png(&img))
    })
    .await?;
    Ok(png(bytes))
}

fn parse_entity_id(id: &str) -> ApiResult<u64> {
    id.parse().map_err(|_| ApiError::not_found(format!("unknown entity {id}")))
}

async fn entity_crop(
    State(state): State<AppState>,
    Path((doc_id, layer, id)): Path<(String, String, String)>,
    Query(params): Query<ImageParams>,
) -> ApiResult<Response> {
    let dpi = check_dpi(params.dpi)?;
    let pad = params.pad.unwrap_or(DEFAULT_PAD);
    if !(0.0..=1.0).contains(&pad) {
        return Err(ApiError::bad_request("invalid_parameter", "pad must be within [0, 1]"));
    }
    let id = parse_entity_id(&id)?;
    let doc = load_parsed(&state, &doc_id)?;
    let entity = doc
        .layer(&layer)
        .ok_or_else(|| ApiError::not_found(format!("unknown layer {layer}")))?
        .get(id)
        .ok_or_else(|| ApiError::not_found(format!("unknown entity {id} in layer {layer}")))?;
    let regions = union_per_page(&entity.boxes);
    let Some(region) = regions.first().copied() else {
        return Err(ApiError::new(
            StatusCode::UNPROCESSABLE_ENTITY,
            "entity_has_no_boxes",
            format!("entity {id} in layer {layer} has no boxes"),
        ));
    };
    let page_count = regions.len();
    let store = state.store.clone();
    let bytes = blocking(move || {
        let pdf = store.load_original(&doc_id).map_err(ApiError::internal)?;
        let renderer = PdfRenderer::new(pdf).map_err(ApiError::internal)?;
        let img = crop_box(&renderer, &region, dpi, pad).map_err(ApiError::internal)?;
        Ok(encode_png(&img))
    })
    .await?;
    let mut response = png(bytes);
    response
        .headers_mut()
        .insert(PAGE_COUNT_HEADER, HeaderValue::from(page_count));
    Ok(response)
}

async fn entity_annotations(
    State(state): State<AppState>,
    Path((doc_id, layer, id)): Path<(String, String, String)>,
) -> ApiResult<Json<Value>> {
    let id = parse_entity_id(&id)?;
    let doc = load_parsed(&state, &doc_id)?;
    let entity = doc
        .layer(&layer)
        .ok_or_else(|| ApiError::not_found(format!("unknown layer {layer}")))?
        .get(id)
        .ok_or_else(|| ApiError::not_found(format!("unknown entity {id} in layer {layer}")))?;
    Ok(Json(views::annotations(&doc, &layer, entity)))
}

#[derive(Deserialize)]
struct SummaryParams {
    section: Option<String>,
}

async fn summary(
    State(state): State<AppState>,
    Path(doc_id): Path<String>,
    Query(params): Query<SummaryParams>,
) -> ApiResult<Json<Value>> {
    let doc = load_parsed(&state, &doc_id)?;
    let filter = params.section.as_deref().filter(|s| !s.is_empty());
    Ok(Json(views::summary(&doc, filter)))
}
