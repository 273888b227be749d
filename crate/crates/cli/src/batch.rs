//! Batch processing of a directory of PDFs into a store-layout directory.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use layerlab_core::doc::Document;
use layerlab_core::pipeline::{doc_id_for, PipelineConfig, RegionHints};
use layerlab_core::predict::{prepare_predictors, EnvSecrets, PredictorSpec, PreparedPredictor, Registry, RegistryError};
use layerlab_core::render::{PageRenderer, PdfRenderer};
use layerlab_service::jobs::parse_document;
use layerlab_service::store::Store;
use serde::Deserialize;

/// Suffix of the region-hint sidecar placed next to a PDF.
pub const SIDECAR_SUFFIX: &str = ".regions.json";

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BatchConfig {
    #[serde(default)]
    pub input_dir: Option<PathBuf>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub pipeline_config: PipelineConfig,
    #[serde(default)]
    pub predictors: Vec<PredictorSpec>,
    #[serde(default = "default_true")]
    pub continue_on_error: bool,
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
}

fn default_true() -> bool {
    true
}

fn default_parallelism() -> usize {
    1
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read { path: String, source: std::io::Error },
    #[error("invalid config: {0}")]
    Parse(String),
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("{0}")]
    Predictors(RegistryError),
}

impl BatchConfig {
    /// Read a YAML or JSON config; relative directories are resolved
    /// against the config file's directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.display().to_string(),
            source,
        })?;
        let mut cfg: BatchConfig = if text.trim().is_empty() {
            serde_yaml::from_str("{}")
        } else {
            serde_yaml::from_str(&text)
        }
        .map_err(|e| ConfigError::Parse(e.to_string()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for dir in [&mut cfg.input_dir, &mut cfg.output_dir].into_iter().flatten() {
            if dir.is_relative() {
                *dir = base.join(&*dir);
            }
        }
        cfg.pipeline_config.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if cfg.parallelism == 0 {
            return Err(ConfigError::Invalid("parallelism must be > 0".into()));
        }
        Ok(cfg)
    }
}

/// Result of processing one input file.
#[derive(Debug, Clone, PartialEq)]
pub enum FileOutcome {
    Ok {
        doc_id: String,
        layers: Vec<(String, usize)>,
        entity_errors: usize,
    },
    Failed {
        message: String,
    },
}

#[derive(Debug, Clone)]
pub struct FileReport {
    pub input: PathBuf,
    pub outcome: FileOutcome,
}

impl FileReport {
    pub fn summary_line(&self) -> String {
        let name = self.input.file_name().and_then(|n| n.to_str()).unwrap_or("?");
        match &self.outcome {
            FileOutcome::Ok {
                doc_id,
                layers,
                entity_errors,
            } => {
                let counts: Vec<String> = layers.iter().map(|(n, c)| format!("{n}={c}")).collect();
                let mut line = format!("ok {name} {doc_id} {}", counts.join(" "));
                if *entity_errors > 0 {
                    line.push_str(&format!(" entity_errors={entity_errors}"));
                }
                line
            }
            FileOutcome::Failed { message } => format!("failed {name}: {message}"),
        }
    }
}

/// `*.pdf` files of `dir`, sorted by name.
pub fn list_pdfs(dir: &Path) -> std::io::Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|e| e.eq_ignore_ascii_case("pdf")))
        .collect();
    files.sort();
    Ok(files)
}

/// Validate predictor specs against `registry` with secrets from the
/// environment.
pub fn prepare(registry: &Registry, specs: &[PredictorSpec]) -> Result<Vec<PreparedPredictor>, ConfigError> {
    prepare_predictors(registry, specs, &EnvSecrets).map_err(ConfigError::Predictors)
}

fn sidecar_for(pdf: &Path) -> PathBuf {
    let stem = pdf.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
    pdf.with_file_name(format!("{stem}{SIDECAR_SUFFIX}"))
}

/// Process one PDF into `store`, exactly as a service job with the same
/// config would, but always parsing afresh.
pub fn process_file(
    store: &Store,
    input: &Path,
    config: &PipelineConfig,
    predictors: &[PreparedPredictor],
) -> Result<(Document, usize), String> {
    let pdf = fs::read(input).map_err(|e| format!("cannot read {}: {e}", input.display()))?;
    layerlab_core::pipeline::probe_pdf(&pdf).map_err(|e| e.to_string())?;
    let filename = input.file_name().and_then(|n| n.to_str()).unwrap_or("input.pdf");
    let doc_id = doc_id_for(&pdf);
    store
        .save_original(&doc_id, &pdf, filename)
        .map_err(|e| format!("cannot store PDF: {e}"))?;
    let sidecar = sidecar_for(input);
    if sidecar.is_file() {
        let text = fs::read_to_string(&sidecar).map_err(|e| format!("cannot read {}: {e}", sidecar.display()))?;
        RegionHints::from_json(&text).map_err(|e| format!("{}: {e}", sidecar.display()))?;
        store.save_regions(&doc_id, &text).map_err(|e| e.to_string())?;
    }
    let errors_dir = store.doc_dir(&doc_id).join("errors");
    if errors_dir.is_dir() {
        fs::remove_dir_all(&errors_dir).map_err(|e| e.to_string())?;
    }
    let mut doc = parse_document(store, &doc_id, config)?;
    let renderer = PdfRenderer::new(pdf).map_err(|e| e.to_string())?;
    let mut entity_errors = 0;
    for p in predictors {
        let outcome = p
            .run(&mut doc, Some(&renderer as &dyn PageRenderer), config.render_dpi)
            .map_err(|e| format!("predictor {}: {e}", p.spec.name))?;
        entity_errors += outcome.errors.len();
        store
            .append_errors(&doc_id, &p.spec.name, &outcome.errors)
            .map_err(|e| e.to_string())?;
    }
    store.save_document(&doc).map_err(|e| format!("cannot store document: {e}"))?;
    Ok((doc, entity_errors))
}

/// Process every PDF of `input_dir`; reports keep input order. Stops
/// scheduling new files after the first failure unless
/// `continue_on_error`.
pub fn run_batch(
    input_dir: &Path,
    output_dir: &Path,
    config: &BatchConfig,
    predictors: &[PreparedPredictor],
) -> std::io::Result<Vec<FileReport>> {
    let inputs = list_pdfs(input_dir)?;
    let store = Store::open(output_dir)?;
    let next = AtomicUsize::new(0);
    let stop = std::sync::atomic::AtomicBool::new(false);
    let reports: Mutex<Vec<Option<FileReport>>> = Mutex::new(vec![None; inputs.len()]);
    std::thread::scope(|scope| {
        for _ in 0..config.parallelism.min(inputs.len().max(1)) {
            scope.spawn(|| loop {
                if stop.load(Ordering::SeqCst) {
                    break;
                }
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(input) = inputs.get(i) else { break };
                let outcome = match process_file(&store, input, &config.pipeline_config, predictors) {
                    Ok((doc, entity_errors)) => FileOutcome::Ok {
                        doc_id: doc.doc_id.clone(),
                        layers: doc.layers().map(|l| (l.name.clone(), l.entities.len())).collect(),
                        entity_errors,
                    },
                    Err(message) => {
                        let stem = input.file_stem().and_then(|s| s.to_str()).unwrap_or("input");
                        let _ = fs::write(output_dir.join(format!("{stem}.error.txt")), format!("{message}\n"));
                        if !config.continue_on_error {
                            stop.store(true, Ordering::SeqCst);
                        }
                        FileOutcome::Failed { message }
                    }
                };
                reports.lock().expect("reports lock")[i] = Some(FileReport {
                    input: input.clone(),
                    outcome,
                });
            });
        }
    });
    Ok(reports.into_inner().expect("reports lock").into_iter().flatten().collect())
}
