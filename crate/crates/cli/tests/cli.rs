use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use layerlab_cli::export::{grid_to_csv, record_to_grid};
use layerlab_core::doc::deserialize;
use layerlab_fixtures::{corrupt_pdf, hello_world, paper, two_column};
use proptest::prelude::*;
use serde_json::{json, Value};

fn layerlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_layerlab"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("run layerlab")
}

/// Input directory with the paper (plus sidecar), hello-world and
/// two-column fixtures.
fn inputs(dir: &Path) -> PathBuf {
    let input = dir.join("in");
    std::fs::create_dir_all(&input).unwrap();
    let f = paper();
    std::fs::write(input.join("paper.pdf"), &f.pdf).unwrap();
    std::fs::write(input.join("paper.regions.json"), &f.regions_json).unwrap();
    std::fs::write(input.join("hello.pdf"), hello_world()).unwrap();
    std::fs::write(input.join("columns.pdf"), two_column().pdf).unwrap();
    input
}

fn write_config(dir: &Path, config: &Value) -> PathBuf {
    let path = dir.join("batch.json");
    std::fs::write(&path, serde_json::to_vec_pretty(config).unwrap()).unwrap();
    path
}

fn documents(out: &Path) -> Vec<(String, Vec<u8>)> {
    let mut docs: Vec<(String, Vec<u8>)> = std::fs::read_dir(out)
        .unwrap()
        .filter_map(|e| {
            let p = e.unwrap().path().join("document.json");
            p.is_file().then(|| (p.display().to_string(), std::fs::read(&p).unwrap()))
        })
        .collect();
    docs.sort();
    docs
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn batch_processes_every_pdf_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let input = inputs(dir.path());
    let out = dir.path().join("out");
    let config = write_config(
        dir.path(),
        &json!({"predictors": [{"name": "gazetteer", "config": {"lexicon": paper().lexicon_tsv}}, {"name": "geometric-table"}]}),
    );
    let args = ["process", "--config", config.to_str().unwrap(), "--input", input.to_str().unwrap(), "--output", out.to_str().unwrap()];
    let first = layerlab(&args);
    assert_eq!(first.status.code(), Some(0), "{}", String::from_utf8_lossy(&first.stderr));
    let text = stdout(&first);
    assert_eq!(text.lines().filter(|l| l.starts_with("ok ")).count(), 3, "{text}");
    assert!(text.contains("tagged_gazetteer=3"), "{text}");
    let before = documents(&out);
    assert_eq!(before.len(), 3);
    for (_, bytes) in &before {
        deserialize(bytes).unwrap();
    }

    let again = layerlab(&args);
    assert_eq!(again.status.code(), Some(0));
    assert_eq!(documents(&out), before);

    let paper_id = layerlab_core::pipeline::doc_id_for(&paper().pdf);
    assert!(out.join(&paper_id).join("pages").join("0.png").is_file());
    assert!(out.join(&paper_id).join("original.pdf").is_file());
}

#[test]
fn corrupt_input_is_reported_and_skipped() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in");
    std::fs::create_dir_all(&input).unwrap();
    std::fs::write(input.join("a.pdf"), hello_world()).unwrap();
    std::fs::write(input.join("b.pdf"), corrupt_pdf()).unwrap();
    std::fs::write(input.join("c.pdf"), paper().pdf).unwrap();
    let out = dir.path().join("out");
    let config = write_config(dir.path(), &json!({"input_dir": "in", "output_dir": "out"}));
    let o = layerlab(&["process", "--config", config.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stdout(&o).lines().any(|l| l.starts_with("failed b.pdf")));
    assert_eq!(documents(&out).len(), 2);
    assert!(out.join("b.error.txt").is_file());

    let strict = write_config(dir.path(), &json!({"input_dir": "in", "output_dir": "strict", "continue_on_error": false}));
    let o = layerlab(&["process", "--config", strict.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn configuration_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let input = inputs(dir.path());
    let out = dir.path().join("out");
    let bad_chat = write_config(
        dir.path(),
        &json!({"predictors": [{"name": "chat", "config": {"endpoint_url": "http://127.0.0.1:9/v1", "model": "m", "api_key_env": "LAYERLAB_TEST_UNSET_VAR"}}]}),
    );
    let o = layerlab(&["process", "--config", bad_chat.to_str().unwrap(), "--input", input.to_str().unwrap(), "--output", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("api_key_env"));
    assert!(!out.exists());

    let ok = write_config(dir.path(), &json!({}));
    let o = layerlab(&["process", "--config", ok.to_str().unwrap(), "--input", "/nonexistent/dir", "--output", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let o = layerlab(&["process", "--config", "/nonexistent/config.yaml"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn export_tables_writes_one_csv_per_table() {
    let dir = tempfile::tempdir().unwrap();
    let input = inputs(dir.path());
    let out = dir.path().join("out");
    let config = write_config(dir.path(), &json!({"predictors": [{"name": "geometric-table"}, {"name": "geometric-table"}]}));
    let o = layerlab(&["process", "--config", config.to_str().unwrap(), "--input", input.to_str().unwrap(), "--output", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));

    let f = paper();
    let id = layerlab_core::pipeline::doc_id_for(&f.pdf);
    let doc_path = out.join(&id).join("document.json");
    let csv_dir = dir.path().join("csv");
    let o = layerlab(&["export-tables", "--doc", doc_path.to_str().unwrap(), "--out", csv_dir.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let mut names: Vec<String> = std::fs::read_dir(&csv_dir).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    names.sort();
    assert_eq!(names, [format!("{id}_image_geometric_table_0.csv"), format!("{id}_image_geometric_table_2_0.csv")]);
    let expected: String = f.table_grid.iter().map(|r| format!("{}\n", r.join(","))).collect();
    for name in &names {
        assert_eq!(std::fs::read_to_string(csv_dir.join(name)).unwrap(), expected);
    }

    let hello = out.join(layerlab_core::pipeline::doc_id_for(&hello_world())).join("document.json");
    let o = layerlab(&["export-tables", "--doc", hello.to_str().unwrap(), "--out", csv_dir.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn csv_round_trips_table_records(
        header in prop::collection::btree_set("[a-zA-Z ,\"\n]{1,8}", 1..5),
        n_rows in 0usize..6,
        seed in prop::collection::vec("[a-z0-9 ,\"\n\u{e9}]{0,6}", 30),
    ) {
        let mut record = serde_json::Map::new();
        for (c, h) in header.iter().enumerate() {
            let col: Vec<Value> = (0..n_rows).map(|r| json!(seed[(c * 6 + r) % seed.len()].clone())).collect();
            record.insert(h.clone(), Value::Array(col));
        }
        let bytes = grid_to_csv(&record_to_grid(&record).unwrap()).unwrap();
        let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(bytes.as_slice());
        let parsed_header: Vec<String> = reader.headers().unwrap().iter().map(str::to_string).collect();
        let rows: Vec<Vec<String>> = reader.records().map(|r| r.unwrap().iter().map(str::to_string).collect()).collect();
        let mut back = serde_json::Map::new();
        for (c, h) in parsed_header.iter().enumerate() {
            back.insert(h.clone(), Value::Array(rows.iter().map(|r| json!(r[c])).collect()));
        }
        prop_assert_eq!(back, record);
    }
}

#[test]
fn serve_binds_ephemeral_port_and_rejects_busy_port() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let mut child = Command::new(env!("CARGO_BIN_EXE_layerlab"))
        .args(["serve", "--port", "0", "--data-dir", data.to_str().unwrap()])
        .env("RUST_LOG", "warn")
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stdout.take().unwrap()).read_line(&mut line).unwrap();
    let addr = line.trim().strip_prefix("listening on http://").expect(&line).to_string();
    assert!(data.is_dir());
    let client = layerlab_fixtures::client::ApiClient::new(format!("http://{addr}"));
    assert_eq!(client.get_json("/predictors").0, 200);

    let port = addr.rsplit(':').next().unwrap();
    let busy = layerlab(&["serve", "--port", port, "--data-dir", data.to_str().unwrap()]);
    assert_eq!(busy.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&busy.stderr).contains("cannot bind"));
    child.kill().unwrap();
    child.wait().unwrap();
}
