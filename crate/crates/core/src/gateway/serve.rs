//! Local HTTP server speaking the chat-completions protocol from a mock
//! script.

use std::net::SocketAddr;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::Duration;

use serde::Deserialize;
use serde_json::json;
use tiny_http::{Header, Method, Response, Server};

use super::MockScript;

#[derive(Debug, Clone, Default)]
pub struct ServeOptions {
    /// Answer the first `n` completion requests with HTTP 429.
    pub fail_first: u64,
    /// Model name echoed in responses.
    pub model: Option<String>,
}

#[derive(Deserialize)]
struct IncomingRequest {
    #[serde(default)]
    model: Option<String>,
    messages: Vec<IncomingMessage>,
}

#[derive(Deserialize)]
struct IncomingMessage {
    role: String,
    content: String,
}

struct ServerState {
    script: MockScript,
    options: ServeOptions,
    requests: AtomicU64,
}

impl ServerState {
    /// Status code and JSON body for one request.
    fn handle(&self, method: &Method, url: &str, body: &str) -> (u16, serde_json::Value) {
        let path = url.split('?').next().unwrap_or(url);
        if *method == Method::Get && path == "/health" {
            return (200, json!({ "status": "ok" }));
        }
        if *method != Method::Post || !path.ends_with("/chat/completions") {
            return (404, error_body("not found"));
        }
        let seen = self.requests.fetch_add(1, Ordering::SeqCst);
        if seen < self.options.fail_first {
            return (429, error_body("rate limited"));
        }
        let request: IncomingRequest = match serde_json::from_str(body) {
            Ok(request) => request,
            Err(err) => return (400, error_body(&format!("malformed request: {err}"))),
        };
        let system = request
            .messages
            .iter()
            .filter(|m| m.role == "system")
            .map(|m| m.content.as_str())
            .collect::<Vec<_>>()
            .join("\n");
        let Some(user) = request.messages.iter().rev().find(|m| m.role == "user") else {
            return (400, error_body("no user message"));
        };
        let Some(content) = self.script.respond(&system, &user.content) else {
            return (400, error_body("no scripted response matches the request"));
        };
        let model = self
            .options
            .model
            .clone()
            .or(request.model)
            .unwrap_or_else(|| "mock".into());
        (
            200,
            json!({
                "id": format!("mock-{seen}"),
                "object": "chat.completion",
                "model": model,
                "choices": [{
                    "index": 0,
                    "message": { "role": "assistant", "content": content },
                    "finish_reason": "stop",
                }],
            }),
        )
    }
}

fn error_body(message: &str) -> serde_json::Value {
    json!({ "error": { "message": message } })
}

/// A running mock server; stops when dropped or on [`MockServer::shutdown`].
pub struct MockServer {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    state: Arc<ServerState>,
    worker: Option<JoinHandle<()>>,
}

impl MockServer {
    /// Bind `addr` (use port 0 for an ephemeral port) and serve in the
    /// background.
    pub fn start(script: MockScript, addr: &str, options: ServeOptions) -> std::io::Result<Self> {
        let server = Server::http(addr).map_err(std::io::Error::other)?;
        let bound = server
            .server_addr()
            .to_ip()
            .ok_or_else(|| std::io::Error::other("server is not bound to an IP address"))?;
        let stop = Arc::new(AtomicBool::new(false));
        let state = Arc::new(ServerState {
            script,
            options,
            requests: AtomicU64::new(0),
        });
        let worker = {
            let stop = stop.clone();
            let state = state.clone();
            thread::spawn(move || serve_loop(&server, &state, &stop))
        };
        Ok(MockServer {
            addr: bound,
            stop,
            state,
            worker: Some(worker),
        })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    /// Base URL suitable for a remote backend configuration.
    pub fn base_url(&self) -> String {
        format!("http://{}/v1", self.addr)
    }

    /// Completion requests received so far.
    pub fn requests(&self) -> u64 {
        self.state.requests.load(Ordering::SeqCst)
    }

    pub fn shutdown(mut self) {
        self.stop_worker();
    }

    /// Block until the process is killed.
    pub fn wait(mut self) {
        if let Some(worker) = self.worker.take() {
            let _ = worker.join();
        }
    }

    fn stop_worker(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        if let Some(worker) = self.worker.take() {
            let _ = worker.join();
        }
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        self.stop_worker();
    }
}

fn serve_loop(server: &Server, state: &ServerState, stop: &AtomicBool) {
    while !stop.load(Ordering::SeqCst) {
        let mut request = match server.recv_timeout(Duration::from_millis(50)) {
            Ok(Some(request)) => request,
            Ok(None) => continue,
            Err(err) => {
                log::error!("mock server receive failed: {err}");
                break;
            }
        };
        let mut body = String::new();
        let (status, payload) = match request.as_reader().read_to_string(&mut body) {
            Ok(_) => state.handle(request.method(), request.url(), &body),
            Err(err) => (400, error_body(&format!("unreadable body: {err}"))),
        };
        let header = Header::from_bytes("Content-Type", "application/json").expect("static header");
        let response = Response::from_string(payload.to_string())
            .with_status_code(status)
            .with_header(header);
        if let Err(err) = request.respond(response) {
            log::warn!("mock server failed to respond: {err}");
        }
    }
}
