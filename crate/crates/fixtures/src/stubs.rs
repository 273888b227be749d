//! Local HTTP stub servers standing in for LLM and image services.

use std::net::SocketAddr;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::{HeaderMap, StatusCode};
use axum::routing::post;
use axum::Router;
use serde_json::{json, Value};
use tokio::sync::oneshot;

/// A request received by a stub.
#[derive(Debug, Clone)]
pub struct Captured {
    pub authorization: Option<String>,
    pub content_type: Option<String>,
    pub body: Vec<u8>,
}

/// What a stub returns for one request: status and body.
pub type Reply = (u16, String);

type Handler = Arc<dyn Fn(usize, &Captured) -> Reply + Send + Sync>;

#[derive(Clone)]
struct StubState {
    handler: Handler,
    delay: Duration,
    requests: Arc<Mutex<Vec<Captured>>>,
}

/// A running stub server; stops when dropped.
pub struct StubServer {
    pub addr: SocketAddr,
    requests: Arc<Mutex<Vec<Captured>>>,
    shutdown: Option<oneshot::Sender<()>>,
    thread: Option<std::thread::JoinHandle<()>>,
}

impl StubServer {
    /// Base URL, e.g. `http://127.0.0.1:1234`.
    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn requests(&self) -> Vec<Captured> {
        self.requests.lock().unwrap().clone()
    }
}

impl Drop for StubServer {
    fn drop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

async fn handle(State(state): State<StubState>, headers: HeaderMap, body: Bytes) -> (StatusCode, String) {
    let header = |name: &str| headers.get(name).and_then(|v| v.to_str().ok()).map(str::to_string);
    let captured = Captured {
        authorization: header("authorization"),
        content_type: header("content-type"),
        body: body.to_vec(),
    };
    let index = {
        let mut reqs = state.requests.lock().unwrap();
        reqs.push(captured.clone());
        reqs.len() - 1
    };
    if !state.delay.is_zero() {
        tokio::time::sleep(state.delay).await;
    }
    let (status, body) = (state.handler)(index, &captured);
    (StatusCode::from_u16(status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR), body)
}

fn spawn(path: &str, handler: Handler, delay: Duration) -> StubServer {
    let requests = Arc::new(Mutex::new(Vec::new()));
    let state = StubState {
        handler,
        delay,
        requests: requests.clone(),
    };
    let app = Router::new().route(path, post(handle)).with_state(state);
    let (addr_tx, addr_rx) = std::sync::mpsc::channel();
    let (stop_tx, stop_rx) = oneshot::channel::<()>();
    let thread = std::thread::spawn(move || {
        let rt = tokio::runtime::Builder::new_current_thread()
            .enable_all()
            .build()
            .expect("tokio runtime");
        rt.block_on(async move {
            let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.expect("bind");
            addr_tx.send(listener.local_addr().unwrap()).unwrap();
            // Dropping the runtime afterwards cancels open connections.
            tokio::select! {
                res = axum::serve(listener, app) => res.expect("stub server"),
                _ = stop_rx => {}
            }
        });
    });
    StubServer {
        addr: addr_rx.recv().expect("stub server started"),
        requests,
        shutdown: Some(stop_tx),
        thread: Some(thread),
    }
}

/// Wrap `content` as an OpenAI-style chat-completion response.
pub fn completion(content: &str) -> String {
    json!({
        "id": "stub",
        "object": "chat.completion",
        "choices": [{"index": 0, "message": {"role": "assistant", "content": content}, "finish_reason": "stop"}]
    })
    .to_string()
}

/// The user message of a captured chat request.
pub fn user_message(req: &Captured) -> String {
    serde_json::from_slice::<Value>(&req.body)
        .ok()
        .and_then(|v| v.pointer("/messages/1/content").and_then(Value::as_str).map(str::to_string))
        .unwrap_or_default()
}

/// Chat-completion stub at `/v1/chat/completions`. `respond` receives the
/// request index and request; its reply body is sent verbatim. Use
/// [`StubServer::url`] + `/v1` as the endpoint URL.
pub fn chat_stub(respond: impl Fn(usize, &Captured) -> Reply + Send + Sync + 'static) -> StubServer {
    spawn("/v1/chat/completions", Arc::new(respond), Duration::ZERO)
}

/// Chat stub answering every request with `content`, after `delay`.
pub fn chat_stub_fixed(content: &str, delay: Duration) -> StubServer {
    let body = completion(content);
    spawn("/v1/chat/completions", Arc::new(move |_, _| (200, body.clone())), delay)
}

/// Chat stub echoing the user message.
pub fn chat_stub_echo() -> StubServer {
    chat_stub(|_, req| (200, completion(&user_message(req))))
}

/// Image-service stub at `/`; `respond` gets the raw multipart body.
pub fn image_stub(respond: impl Fn(usize, &Captured) -> Reply + Send + Sync + 'static) -> StubServer {
    spawn("/", Arc::new(respond), Duration::ZERO)
}
