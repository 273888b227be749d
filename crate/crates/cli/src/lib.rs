//! Command-line entry points: batch processing, table export and the
//! service launcher.

pub mod batch;
pub mod export;

use std::path::PathBuf;

use clap::{Parser, Subcommand};
use layerlab_core::builtin::default_registry;
use layerlab_core::doc::deserialize;
use layerlab_service::{AppState, ServiceConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_FILE_FAILURES: i32 = 2;
pub const EXIT_NO_TABLES: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "layerlab", version, about = "Process PDFs into layered documents and serve them")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Process every *.pdf of a directory with a configured pipeline.
    ///
    /// Output mirrors the service's data directory, so it can be served
    /// with `layerlab serve --data-dir <output>`. A `<name>.regions.json`
    /// next to a PDF is used as its region-hint sidecar. Exit codes: 0 all
    /// files ok, 1 configuration error, 2 some files failed.
    Process {
        /// Batch config (YAML or JSON): input_dir, output_dir,
        /// pipeline_config, predictors, continue_on_error, parallelism.
        #[arg(long)]
        config: PathBuf,
        /// Overrides input_dir of the config.
        #[arg(long)]
        input: Option<PathBuf>,
        /// Overrides output_dir of the config.
        #[arg(long)]
        output: Option<PathBuf>,
        /// Overrides parallelism of the config.
        #[arg(long)]
        parallelism: Option<usize>,
    },
    /// Write each parsed table of a document as CSV (exit 3 if none).
    ExportTables {
        /// A document.json file.
        #[arg(long)]
        doc: PathBuf,
        /// Output directory, created if missing.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the HTTP service until interrupted.
    ///
    /// Flags override LAYERLAB_PORT and LAYERLAB_DATA_DIR; port 0 binds a
    /// free port. The bound address is printed on stdout.
    Serve {
        #[arg(long)]
        port: Option<u16>,
        #[arg(long)]
        data_dir: Option<PathBuf>,
        /// Directory with the built webapp, served at `/`.
        #[arg(long)]
        static_dir: Option<PathBuf>,
    },
}

pub fn run(cli: Cli) -> i32 {
    match cli.command {
        Command::Process {
            config,
            input,
            output,
            parallelism,
        } => process(config, input, output, parallelism),
        Command::ExportTables { doc, out } => export_tables(doc, out),
        Command::Serve {
            port,
            data_dir,
            static_dir,
        } => serve(port, data_dir, static_dir),
    }
}

fn process(config: PathBuf, input: Option<PathBuf>, output: Option<PathBuf>, parallelism: Option<usize>) -> i32 {
    let mut cfg = match batch::BatchConfig::load(&config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    if let Some(p) = parallelism {
        cfg.parallelism = p.max(1);
    }
    let Some(input_dir) = input.or(cfg.input_dir.clone()) else {
        eprintln!("error: no input directory (set input_dir or pass --input)");
        return EXIT_CONFIG;
    };
    let Some(output_dir) = output.or(cfg.output_dir.clone()) else {
        eprintln!("error: no output directory (set output_dir or pass --output)");
        return EXIT_CONFIG;
    };
    if !input_dir.is_dir() {
        eprintln!("error: input directory {} does not exist", input_dir.display());
        return EXIT_CONFIG;
    }
    let predictors = match batch::prepare(&default_registry(), &cfg.predictors) {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    let reports = match batch::run_batch(&input_dir, &output_dir, &cfg, &predictors) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    let mut failed = 0;
    for report in &reports {
        println!("{}", report.summary_line());
        if matches!(report.outcome, batch::FileOutcome::Failed { .. }) {
            failed += 1;
        }
    }
    println!("{} processed, {failed} failed", reports.len());
    if failed > 0 {
        EXIT_FILE_FAILURES
    } else {
        EXIT_OK
    }
}

fn export_tables(doc: PathBuf, out: PathBuf) -> i32 {
    let parsed = std::fs::read(&doc)
        .map_err(|e| e.to_string())
        .and_then(|b| deserialize(&b).map_err(|e| e.to_string()));
    let document = match parsed {
        Ok(d) => d,
        Err(e) => {
            eprintln!("error: cannot load {}: {e}", doc.display());
            return EXIT_CONFIG;
        }
    };
    match export::export_tables(&document, &out) {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            EXIT_OK
        }
        Err(export::ExportError::NoTables) => {
            eprintln!("error: no parsed tables found in {}", doc.display());
            EXIT_NO_TABLES
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_CONFIG
        }
    }
}

fn serve(port: Option<u16>, data_dir: Option<PathBuf>, static_dir: Option<PathBuf>) -> i32 {
    let mut config = match ServiceConfig::from_env() {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    if let Some(p) = port {
        config.port = p;
    }
    if let Some(d) = data_dir {
        config.data_dir = d;
    }
    if static_dir.is_some() {
        config.static_dir = static_dir;
    }
    let runtime = match tokio::runtime::Runtime::new() {
        Ok(rt) => rt,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    runtime.block_on(async move {
        let listener = match layerlab_service::bind(&config).await {
            Ok(l) => l,
            Err(e) => {
                eprintln!("error: {e}");
                return EXIT_CONFIG;
            }
        };
        let state = match AppState::new(config.clone()) {
            Ok(s) => s,
            Err(e) => {
                eprintln!("error: cannot open data dir {}: {e}", config.data_dir.display());
                return EXIT_CONFIG;
            }
        };
        match listener.local_addr() {
            Ok(addr) => println!("listening on http://{addr}"),
            Err(e) => {
                eprintln!("error: {e}");
                return EXIT_CONFIG;
            }
        }
        let shutdown = async {
            let _ = tokio::signal::ctrl_c().await;
        };
        match layerlab_service::serve(listener, state, shutdown).await {
            Ok(()) => EXIT_OK,
            Err(e) => {
                eprintln!("error: {e}");
                EXIT_CONFIG
            }
        }
    })
}
