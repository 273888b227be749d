//! Filesystem persistence: one directory per document.
//!
//! ```text
//! <root>/<doc_id>/original.pdf
//!                 upload.json          source filename
//!                 regions.json         optional region-hint sidecar
//!                 document.json        canonical document
//!                 pages/<n>.png
//!                 errors/<predictor>.jsonl
//!                 jobs/<job_id>.json
//! <root>/events.log
//! ```

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use layerlab_core::doc::{deserialize, normalize_layer_name, serialize, DocError, Document};
use layerlab_core::predict::EntityError;
use serde::{Deserialize, Serialize};

use crate::jobs::ProcessingJob;

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("stored document is invalid: {0}")]
    Document(#[from] DocError),
    #[error("stored record is invalid: {0}")]
    Json(#[from] serde_json::Error),
}

/// Write `bytes` to a temporary sibling, then rename it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let dir = path.parent().expect("store paths have a parent");
    fs::create_dir_all(dir)?;
    let tmp = dir.join(format!(
        ".{}.{}.tmp",
        path.file_name().and_then(|n| n.to_str()).unwrap_or("file"),
        uuid::Uuid::new_v4().simple()
    ));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)
}

/// Document ids are lowercase hex SHA-256 digests.
pub fn is_doc_id(id: &str) -> bool {
    id.len() == 64 && id.bytes().all(|b| matches!(b, b'0'..=b'9' | b'a'..=b'f'))
}

/// Job ids are simple-format UUIDs.
pub fn is_job_id(id: &str) -> bool {
    id.len() == 32 && id.bytes().all(|b| matches!(b, b'0'..=b'9' | b'a'..=b'f'))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UploadInfo {
    pub source_filename: String,
}

pub struct Store {
    root: PathBuf,
    events: Mutex<()>,
}

impl Store {
    pub fn open(root: impl Into<PathBuf>) -> io::Result<Self> {
        let root = root.into();
        fs::create_dir_all(&root)?;
        Ok(Self {
            root,
            events: Mutex::new(()),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn doc_dir(&self, doc_id: &str) -> PathBuf {
        self.root.join(doc_id)
    }

    pub fn pdf_path(&self, doc_id: &str) -> PathBuf {
        self.doc_dir(doc_id).join("original.pdf")
    }

    pub fn document_path(&self, doc_id: &str) -> PathBuf {
        self.doc_dir(doc_id).join("document.json")
    }

    pub fn page_path(&self, doc_id: &str, page: u32) -> PathBuf {
        self.doc_dir(doc_id).join("pages").join(format!("{page}.png"))
    }

    pub fn errors_path(&self, doc_id: &str, predictor: &str) -> PathBuf {
        self.doc_dir(doc_id)
            .join("errors")
            .join(format!("{}.jsonl", normalize_layer_name(predictor)))
    }

    pub fn job_path(&self, doc_id: &str, job_id: &str) -> PathBuf {
        self.doc_dir(doc_id).join("jobs").join(format!("{job_id}.json"))
    }

    fn upload_path(&self, doc_id: &str) -> PathBuf {
        self.doc_dir(doc_id).join("upload.json")
    }

    fn regions_path(&self, doc_id: &str) -> PathBuf {
        self.doc_dir(doc_id).join("regions.json")
    }

    pub fn has_document(&self, doc_id: &str) -> bool {
        is_doc_id(doc_id) && self.pdf_path(doc_id).is_file()
    }

    /// Store an uploaded PDF; returns false if it was already present.
    pub fn save_original(&self, doc_id: &str, pdf: &[u8], filename: &str) -> io::Result<bool> {
        if self.has_document(doc_id) {
            return Ok(false);
        }
        let info = UploadInfo {
            source_filename: filename.to_string(),
        };
        write_atomic(&self.upload_path(doc_id), &serde_json::to_vec(&info)?)?;
        write_atomic(&self.pdf_path(doc_id), pdf)?;
        Ok(true)
    }

    pub fn load_original(&self, doc_id: &str) -> io::Result<Vec<u8>> {
        fs::read(self.pdf_path(doc_id))
    }

    pub fn upload_info(&self, doc_id: &str) -> UploadInfo {
        fs::read(self.upload_path(doc_id))
            .ok()
            .and_then(|b| serde_json::from_slice(&b).ok())
            .unwrap_or_else(|| UploadInfo {
                source_filename: "original.pdf".into(),
            })
    }

    /// Replace the region-hint sidecar and drop the parsed document it
    /// would change.
    pub fn save_regions(&self, doc_id: &str, text: &str) -> io::Result<()> {
        if self.load_regions(doc_id).as_deref() == Some(text) {
            return Ok(());
        }
        write_atomic(&self.regions_path(doc_id), text.as_bytes())?;
        match fs::remove_file(self.document_path(doc_id)) {
            Err(e) if e.kind() != io::ErrorKind::NotFound => Err(e),
            _ => Ok(()),
        }
    }

    pub fn load_regions(&self, doc_id: &str) -> Option<String> {
        fs::read_to_string(self.regions_path(doc_id)).ok()
    }

    /// Canonical bytes of the parsed document, if parsing has completed.
    pub fn document_bytes(&self, doc_id: &str) -> io::Result<Option<Vec<u8>>> {
        match fs::read(self.document_path(doc_id)) {
            Ok(b) => Ok(Some(b)),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(e),
        }
    }

    pub fn load_document(&self, doc_id: &str) -> Result<Option<Document>, StoreError> {
        match self.document_bytes(doc_id)? {
            Some(b) => Ok(Some(deserialize(&b)?)),
            None => Ok(None),
        }
    }

    pub fn save_document(&self, doc: &Document) -> io::Result<()> {
        write_atomic(&self.document_path(&doc.doc_id), &serialize(doc))
    }

    pub fn save_page(&self, doc_id: &str, page: u32, png: &[u8]) -> io::Result<()> {
        write_atomic(&self.page_path(doc_id, page), png)
    }

    pub fn has_pages(&self, doc_id: &str, count: usize) -> bool {
        (0..count as u32).all(|p| self.page_path(doc_id, p).is_file())
    }

    pub fn append_errors(&self, doc_id: &str, predictor: &str, errors: &[EntityError]) -> io::Result<()> {
        if errors.is_empty() {
            return Ok(());
        }
        let path = self.errors_path(doc_id, predictor);
        fs::create_dir_all(path.parent().expect("errors dir"))?;
        let mut out = Vec::new();
        for e in errors {
            serde_json::to_writer(&mut out, e)?;
            out.push(b'\n');
        }
        fs::OpenOptions::new().create(true).append(true).open(path)?.write_all(&out)
    }

    pub fn save_job(&self, job: &ProcessingJob) -> io::Result<()> {
        let bytes = serde_json::to_vec_pretty(job)?;
        write_atomic(&self.job_path(&job.doc_id, &job.job_id), &bytes)
    }

    /// Find a persisted job by id across all documents.
    pub fn find_job(&self, job_id: &str) -> Result<Option<ProcessingJob>, StoreError> {
        if !is_job_id(job_id) {
            return Ok(None);
        }
        for entry in fs::read_dir(&self.root)? {
            let path = entry?.path().join("jobs").join(format!("{job_id}.json"));
            if path.is_file() {
                return Ok(Some(serde_json::from_slice(&fs::read(path)?)?));
            }
        }
        Ok(None)
    }

    /// Ids of stored documents, sorted.
    pub fn list_documents(&self) -> io::Result<Vec<String>> {
        let mut ids: Vec<String> = fs::read_dir(&self.root)?
            .filter_map(|e| e.ok()?.file_name().into_string().ok())
            .filter(|id| self.has_document(id))
            .collect();
        ids.sort();
        Ok(ids)
    }

    /// Append a line to the service event log.
    pub fn log_event(&self, line: &str) {
        let _guard = self.events.lock().unwrap_or_else(|e| e.into_inner());
        let stamped = format!("{} {line}\n", chrono::Utc::now().to_rfc3339());
        let res = fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(self.root.join("events.log"))
            .and_then(|mut f| f.write_all(stamped.as_bytes()));
        if let Err(e) = res {
            tracing::warn!("cannot write event log: {e}");
        }
    }
}
