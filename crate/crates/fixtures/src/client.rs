//! Blocking client for the service API used by integration tests.

use std::time::{Duration, Instant};

use reqwest::blocking::{multipart, Client, Response};
use serde_json::Value;

pub struct ApiClient {
    pub base: String,
    http: Client,
}

/// Status code plus body parsed as JSON (`Null` when not JSON).
pub type JsonReply = (u16, Value);

fn reply(r: Response) -> JsonReply {
    let status = r.status().as_u16();
    let body = r.bytes().map(|b| serde_json::from_slice(&b).unwrap_or(Value::Null)).unwrap_or(Value::Null);
    (status, body)
}

impl ApiClient {
    pub fn new(base: impl Into<String>) -> Self {
        Self {
            base: base.into(),
            http: Client::builder().timeout(Duration::from_secs(60)).build().expect("http client"),
        }
    }

    fn url(&self, path: &str) -> String {
        format!("{}{path}", self.base)
    }

    /// Upload `pdf` as `filename`, optionally with a region-hint sidecar.
    pub fn upload(&self, pdf: &[u8], filename: &str, regions: Option<&str>) -> JsonReply {
        let part = multipart::Part::bytes(pdf.to_vec())
            .file_name(filename.to_string())
            .mime_str("application/pdf")
            .expect("mime");
        let mut form = multipart::Form::new().part("file", part);
        if let Some(r) = regions {
            form = form.text("regions", r.to_string());
        }
        reply(self.http.post(self.url("/documents")).multipart(form).send().expect("upload request"))
    }

    pub fn post_json(&self, path: &str, body: &Value) -> JsonReply {
        reply(self.http.post(self.url(path)).json(body).send().expect("POST request"))
    }

    pub fn get_json(&self, path: &str) -> JsonReply {
        reply(self.http.get(self.url(path)).send().expect("GET request"))
    }

    /// Status, headers and raw body.
    pub fn get_raw(&self, path: &str) -> (u16, reqwest::header::HeaderMap, Vec<u8>) {
        let r = self.http.get(self.url(path)).send().expect("GET request");
        let status = r.status().as_u16();
        let headers = r.headers().clone();
        (status, headers, r.bytes().expect("body").to_vec())
    }

    /// Start processing; panics unless the job is accepted.
    pub fn process(&self, doc_id: &str, body: &Value) -> String {
        let (status, reply) = self.post_json(&format!("/documents/{doc_id}/process"), body);
        assert_eq!(status, 202, "process rejected: {reply}");
        reply["job_id"].as_str().expect("job_id").to_string()
    }

    /// Poll a job every 50 ms until `finished_at` is set; returns every
    /// observed snapshot.
    pub fn poll_job(&self, job_id: &str, timeout: Duration) -> Vec<Value> {
        let start = Instant::now();
        let mut seen = Vec::new();
        loop {
            let (status, job) = self.get_json(&format!("/jobs/{job_id}"));
            assert_eq!(status, 200, "job lookup failed: {job}");
            let done = !job["finished_at"].is_null();
            seen.push(job);
            if done {
                return seen;
            }
            assert!(start.elapsed() < timeout, "job {job_id} did not finish in {timeout:?}");
            std::thread::sleep(Duration::from_millis(50));
        }
    }
}
