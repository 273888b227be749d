//! Processing jobs: staged execution of parse plus predictor runs.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use chrono::{DateTime, Utc};
use layerlab_core::doc::Document;
use layerlab_core::pipeline::{run_core_pipeline, PipelineConfig, RegionHints};
use layerlab_core::predict::{PredictorSpec, PreparedPredictor};
use layerlab_core::render::{encode_png, PageRenderer, PdfRenderer};
use serde::{Deserialize, Serialize};
use tokio::sync::{mpsc, Semaphore};

use crate::store::Store;

pub const PARSE_STAGE: &str = "parse";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StageState {
    Pending,
    Running,
    Done,
    Failed,
    Skipped,
}

impl StageState {
    pub fn is_terminal(self) -> bool {
        matches!(self, StageState::Done | StageState::Failed | StageState::Skipped)
    }

    /// Position in the state order; states never move backwards.
    pub fn rank(self) -> u8 {
        match self {
            StageState::Pending => 0,
            StageState::Running => 1,
            StageState::Done | StageState::Failed | StageState::Skipped => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stage {
    pub name: String,
    pub state: StageState,
    pub error: Option<String>,
    /// Result layer written by a predictor stage.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub layer: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub produced: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entity_errors: Option<usize>,
}

impl Stage {
    fn pending(name: &str) -> Self {
        Self {
            name: name.to_string(),
            state: StageState::Pending,
            error: None,
            layer: None,
            produced: None,
            entity_errors: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProcessingJob {
    pub job_id: String,
    pub doc_id: String,
    pub stages: Vec<Stage>,
    /// Specs as submitted, with inline secrets replaced by variable names.
    pub requested_predictors: Vec<PredictorSpec>,
    pub pipeline_config: PipelineConfig,
    pub created_at: DateTime<Utc>,
    pub finished_at: Option<DateTime<Utc>>,
}

impl ProcessingJob {
    pub fn new(doc_id: &str, predictors: Vec<PredictorSpec>, pipeline_config: PipelineConfig) -> Self {
        let mut stages = vec![Stage::pending(PARSE_STAGE)];
        stages.extend(predictors.iter().map(|p| Stage::pending(&p.name)));
        Self {
            job_id: uuid::Uuid::new_v4().simple().to_string(),
            doc_id: doc_id.to_string(),
            stages,
            requested_predictors: predictors,
            pipeline_config,
            created_at: Utc::now(),
            finished_at: None,
        }
    }

    pub fn is_finished(&self) -> bool {
        self.finished_at.is_some()
    }
}

/// A queued job together with its validated predictors.
pub struct JobTask {
    pub job_id: String,
    pub predictors: Vec<PreparedPredictor>,
}

/// Live job records plus one sequential queue per document; at most
/// `workers` jobs run at once.
pub struct JobManager {
    store: Arc<Store>,
    jobs: Mutex<HashMap<String, ProcessingJob>>,
    queues: Mutex<HashMap<String, mpsc::UnboundedSender<JobTask>>>,
    slots: Arc<Semaphore>,
}

impl JobManager {
    pub fn new(store: Arc<Store>, workers: usize) -> Arc<Self> {
        Arc::new(Self {
            store,
            jobs: Mutex::new(HashMap::new()),
            queues: Mutex::new(HashMap::new()),
            slots: Arc::new(Semaphore::new(workers.max(1))),
        })
    }

    pub fn get(&self, job_id: &str) -> Option<ProcessingJob> {
        self.jobs.lock().expect("jobs lock").get(job_id).cloned()
    }

    /// Persist and enqueue a new job. Must be called inside a tokio runtime.
    pub fn submit(self: &Arc<Self>, job: ProcessingJob, predictors: Vec<PreparedPredictor>) -> std::io::Result<()> {
        self.store.save_job(&job)?;
        self.store.log_event(&format!(
            "job {} created for document {} with stages [{}]",
            job.job_id,
            job.doc_id,
            job.stages.iter().map(|s| s.name.as_str()).collect::<Vec<_>>().join(", ")
        ));
        let task = JobTask {
            job_id: job.job_id.clone(),
            predictors,
        };
        let doc_id = job.doc_id.clone();
        self.jobs.lock().expect("jobs lock").insert(job.job_id.clone(), job);
        let mut queues = self.queues.lock().expect("queues lock");
        let tx = queues.entry(doc_id).or_insert_with(|| {
            let (tx, rx) = mpsc::unbounded_channel();
            tokio::spawn(Arc::clone(self).drain(rx));
            tx
        });
        tx.send(task).expect("document queue is alive");
        Ok(())
    }

    async fn drain(self: Arc<Self>, mut rx: mpsc::UnboundedReceiver<JobTask>) {
        while let Some(task) = rx.recv().await {
            let _permit = self.slots.clone().acquire_owned().await.expect("semaphore open");
            let manager = Arc::clone(&self);
            let job_id = task.job_id.clone();
            if let Err(e) = tokio::task::spawn_blocking(move || manager.execute(task)).await {
                tracing::error!("job {job_id} panicked: {e}");
                self.update(&job_id, |job| {
                    for s in job.stages.iter_mut().filter(|s| !s.state.is_terminal()) {
                        s.state = StageState::Failed;
                        s.error = Some("internal error".into());
                    }
                    job.finished_at = Some(Utc::now());
                });
            }
        }
    }

    /// Apply `f` to the job and persist the result.
    fn update(&self, job_id: &str, f: impl FnOnce(&mut ProcessingJob)) {
        let snapshot = {
            let mut jobs = self.jobs.lock().expect("jobs lock");
            let Some(job) = jobs.get_mut(job_id) else { return };
            f(job);
            job.clone()
        };
        if let Err(e) = self.store.save_job(&snapshot) {
            tracing::error!("cannot persist job {job_id}: {e}");
        }
    }

    fn set_stage(&self, job_id: &str, index: usize, state: StageState, error: Option<String>) {
        self.update(job_id, |job| {
            let stage = &mut job.stages[index];
            stage.state = state;
            stage.error = error;
        });
        self.store.log_event(&format!("job {job_id} stage {index} {state:?}"));
    }

    fn execute(&self, task: JobTask) {
        let job_id = task.job_id.as_str();
        let Some(job) = self.get(job_id) else { return };
        let doc = match self.parse_stage(&job) {
            Ok(doc) => Some(doc),
            Err(message) => {
                self.set_stage(job_id, 0, StageState::Failed, Some(message));
                None
            }
        };
        let renderer = self
            .store
            .load_original(&job.doc_id)
            .ok()
            .and_then(|pdf| PdfRenderer::new(pdf).ok());
        let mut doc = doc;
        for (i, predictor) in task.predictors.iter().enumerate() {
            let index = i + 1;
            self.set_stage(job_id, index, StageState::Running, None);
            let Some(doc) = doc.as_mut() else {
                self.set_stage(job_id, index, StageState::Failed, Some("parse stage failed".into()));
                continue;
            };
            let renderer = renderer.as_ref().map(|r| r as &dyn PageRenderer);
            match predictor.run(doc, renderer, job.pipeline_config.render_dpi) {
                Ok(outcome) => {
                    let persisted = self
                        .store
                        .save_document(doc)
                        .and_then(|_| self.store.append_errors(&doc.doc_id, &predictor.spec.name, &outcome.errors));
                    let failed = outcome.produced == 0 && !outcome.errors.is_empty();
                    let summary = match (&persisted, outcome.errors.first()) {
                        (Err(e), _) => Some(format!("cannot persist results: {e}")),
                        (Ok(_), Some(first)) => Some(format!(
                            "{} of {} entities failed; first error: {}",
                            outcome.errors.len(),
                            outcome.errors.len() + outcome.produced,
                            first.message
                        )),
                        (Ok(_), None) => None,
                    };
                    self.update(job_id, |job| {
                        let stage = &mut job.stages[index];
                        stage.layer = Some(outcome.layer.clone());
                        stage.produced = Some(outcome.produced);
                        stage.entity_errors = Some(outcome.errors.len());
                    });
                    let state = if failed || persisted.is_err() {
                        StageState::Failed
                    } else {
                        StageState::Done
                    };
                    self.set_stage(job_id, index, state, summary);
                }
                Err(e) => self.set_stage(job_id, index, StageState::Failed, Some(e.to_string())),
            }
        }
        self.update(job_id, |job| job.finished_at = Some(Utc::now()));
        self.store.log_event(&format!("job {job_id} finished"));
    }

    /// Reuse the stored document when its config hash matches, otherwise
    /// parse and render pages.
    fn parse_stage(&self, job: &ProcessingJob) -> Result<Document, String> {
        let config = &job.pipeline_config;
        let cached = self.store.load_document(&job.doc_id).ok().flatten().filter(|d| {
            d.metadata.pipeline_config_hash == config.config_hash() && self.store.has_pages(&d.doc_id, d.pages.len())
        });
        if let Some(doc) = cached {
            self.set_stage(&job.job_id, 0, StageState::Skipped, None);
            return Ok(doc);
        }
        self.set_stage(&job.job_id, 0, StageState::Running, None);
        let doc = parse_document(&self.store, &job.doc_id, config)?;
        self.set_stage(&job.job_id, 0, StageState::Done, None);
        Ok(doc)
    }
}

/// Parse a stored PDF, render its pages and persist both.
pub fn parse_document(store: &Store, doc_id: &str, config: &PipelineConfig) -> Result<Document, String> {
    let pdf = store.load_original(doc_id).map_err(|e| format!("cannot read PDF: {e}"))?;
    let hints = match store.load_regions(doc_id) {
        Some(text) => Some(RegionHints::from_json(&text).map_err(|e| e.to_string())?),
        None => None,
    };
    let filename = store.upload_info(doc_id).source_filename;
    let doc = run_core_pipeline(&pdf, &filename, config, hints.as_ref()).map_err(|e| e.to_string())?;
    let renderer = PdfRenderer::new(pdf).map_err(|e| e.to_string())?;
    for page in 0..doc.pages.len() as u32 {
        let img = renderer.render_page(page, config.render_dpi).map_err(|e| e.to_string())?;
        store
            .save_page(doc_id, page, &encode_png(&img))
            .map_err(|e| format!("cannot store page render: {e}"))?;
    }
    store.save_document(&doc).map_err(|e| format!("cannot store document: {e}"))?;
    Ok(doc)
}
