//! JSON-RPC message transports: stdio, legacy HTTP+SSE, streamable HTTP.
//!
//! Responses are routed to waiting requests through a shared pending map
//! keyed by request id, so many requests can be in flight on one connection.

use std::collections::HashMap;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::Duration;

use eventsource_stream::Eventsource;
use futures::StreamExt;
use parking_lot::Mutex;
use serde_json::Value;
use tokio::io::{AsyncBufReadExt, AsyncWriteExt, BufReader};
use tokio::process::{ChildStdin, Command};
use tokio::sync::oneshot;
use tokio::task::JoinHandle;

use super::{McpError, McpTransport};

type Reply = Result<Value, McpError>;

/// Requests waiting for their response, plus the connection's liveness.
#[derive(Default)]
pub(crate) struct Router {
    pending: Mutex<HashMap<u64, oneshot::Sender<Reply>>>,
    closed: AtomicBool,
    close_reason: Mutex<Option<String>>,
}

impl Router {
    pub fn register(&self, id: u64) -> Result<oneshot::Receiver<Reply>, McpError> {
        if self.is_closed() {
            return Err(McpError::Transport(self.reason()));
        }
        let (tx, rx) = oneshot::channel();
        self.pending.lock().insert(id, tx);
        Ok(rx)
    }

    pub fn forget(&self, id: u64) {
        self.pending.lock().remove(&id);
    }

    pub fn is_closed(&self) -> bool {
        self.closed.load(Ordering::Acquire)
    }

    fn reason(&self) -> String {
        self.close_reason.lock().clone().unwrap_or_else(|| "connection closed".into())
    }

    /// Marks the connection dead and fails every waiting request.
    pub fn close(&self, reason: &str) {
        self.close_reason.lock().get_or_insert_with(|| reason.to_string());
        self.closed.store(true, Ordering::Release);
        let waiting: Vec<_> = self.pending.lock().drain().collect();
        for (_, tx) in waiting {
            let _ = tx.send(Err(McpError::Transport(reason.to_string())));
        }
    }

    /// Routes one incoming message (or batch). Server-initiated requests and
    /// notifications are ignored.
    pub fn dispatch(&self, message: Value) {
        if let Value::Array(batch) = message {
            batch.into_iter().for_each(|m| self.dispatch(m));
            return;
        }
        let id = match message.get("id") {
            Some(Value::Number(n)) => n.as_u64(),
            Some(Value::String(s)) => s.parse().ok(),
            _ => None,
        };
        let Some(id) = id else { return };
        if message.get("method").is_some() {
            return;
        }
        let Some(tx) = self.pending.lock().remove(&id) else { return };
        let reply = match (message.get("error"), message.get("result")) {
            (Some(err), _) => Err(McpError::Rpc {
                code: err.get("code").and_then(Value::as_i64).unwrap_or(0),
                message: err.get("message").and_then(Value::as_str).unwrap_or("unknown error").to_string(),
            }),
            (None, Some(result)) => Ok(result.clone()),
            (None, None) => Err(McpError::Transport("response carries neither result nor error".into())),
        };
        let _ = tx.send(reply);
    }
}

/// A live transport. Dropping it stops background readers and child processes.
pub(crate) struct Connection {
    pub router: Arc<Router>,
    kind: Kind,
    reader: Option<JoinHandle<()>>,
}

impl Drop for Connection {
    fn drop(&mut self) {
        if let Some(r) = self.reader.take() {
            r.abort();
        }
        self.router.close("session closed");
    }
}

enum Kind {
    Stdio {
        stdin: tokio::sync::Mutex<ChildStdin>,
        _child: tokio::process::Child,
    },
    Sse {
        http: reqwest::Client,
        post_url: String,
    },
    Streamable {
        http: reqwest::Client,
        url: String,
        session_id: Mutex<Option<String>>,
        protocol_version: Mutex<Option<String>>,
    },
}

fn unreachable(e: impl std::fmt::Display) -> McpError {
    McpError::TransportUnreachable(e.to_string())
}

fn http_client() -> Result<reqwest::Client, McpError> {
    reqwest::Client::builder().pool_max_idle_per_host(64).build().map_err(unreachable)
}

impl Connection {
    pub async fn open(transport: &McpTransport, timeout: Duration) -> Result<Self, McpError> {
        let router = Arc::new(Router::default());
        match transport {
            McpTransport::Stdio { command, args, env } => {
                let mut child = Command::new(command)
                    .args(args)
                    .envs(env)
                    .stdin(std::process::Stdio::piped())
                    .stdout(std::process::Stdio::piped())
                    .stderr(std::process::Stdio::inherit())
                    .kill_on_drop(true)
                    .spawn()
                    .map_err(|e| unreachable(format!("cannot start {command}: {e}")))?;
                let stdin = child.stdin.take().expect("piped stdin");
                let stdout = child.stdout.take().expect("piped stdout");
                let r = router.clone();
                let reader = crate::runtime::handle().spawn(async move {
                    let mut lines = BufReader::new(stdout).lines();
                    while let Ok(Some(line)) = lines.next_line().await {
                        if let Ok(msg) = serde_json::from_str(&line) {
                            r.dispatch(msg);
                        }
                    }
                    r.close("server process closed its output");
                });
                Ok(Self {
                    router,
                    kind: Kind::Stdio { stdin: tokio::sync::Mutex::new(stdin), _child: child },
                    reader: Some(reader),
                })
            }
            McpTransport::Sse { url } => {
                let http = http_client()?;
                let response = tokio::time::timeout(
                    timeout,
                    http.get(url).header(reqwest::header::ACCEPT, "text/event-stream").send(),
                )
                .await
                .map_err(|_| unreachable("timed out opening event stream"))?
                .map_err(unreachable)?;
                if !response.status().is_success() {
                    return Err(unreachable(format!("event stream answered HTTP {}", response.status().as_u16())));
                }
                let base = url::Url::parse(url).map_err(|e| McpError::InvalidEndpoint(e.to_string()))?;
                let (endpoint_tx, endpoint_rx) = oneshot::channel::<String>();
                let r = router.clone();
                let reader = crate::runtime::handle().spawn(async move {
                    let mut events = response.bytes_stream().eventsource();
                    let mut endpoint_tx = Some(endpoint_tx);
                    while let Some(Ok(event)) = events.next().await {
                        match event.event.as_str() {
                            "endpoint" => {
                                if let Some(tx) = endpoint_tx.take() {
                                    let _ = tx.send(event.data);
                                }
                            }
                            "message" => {
                                if let Ok(msg) = serde_json::from_str(&event.data) {
                                    r.dispatch(msg);
                                }
                            }
                            _ => {}
                        }
                    }
                    r.close("event stream ended");
                });
                let endpoint = match tokio::time::timeout(timeout, endpoint_rx).await {
                    Ok(Ok(e)) => e,
                    _ => {
                        reader.abort();
                        return Err(unreachable("server never announced its message endpoint"));
                    }
                };
                let post_url = base.join(endpoint.trim()).map_err(unreachable)?.to_string();
                Ok(Self { router, kind: Kind::Sse { http, post_url }, reader: Some(reader) })
            }
            McpTransport::StreamableHttp { url } => Ok(Self {
                router,
                kind: Kind::Streamable {
                    http: http_client()?,
                    url: url.clone(),
                    session_id: Mutex::new(None),
                    protocol_version: Mutex::new(None),
                },
                reader: None,
            }),
        }
    }

    /// Called once the handshake has fixed the protocol version.
    pub fn set_protocol_version(&self, version: &str) {
        if let Kind::Streamable { protocol_version, .. } = &self.kind {
            *protocol_version.lock() = Some(version.to_string());
        }
    }

    /// Sends one message. Responses arrive through the router.
    pub async fn send(&self, message: &Value, timeout: Duration) -> Result<(), McpError> {
        if self.router.is_closed() {
            return Err(McpError::Transport(self.router.reason()));
        }
        let result = self.send_inner(message, timeout).await;
        if let Err(McpError::Transport(reason)) = &result {
            self.router.close(reason);
        }
        result
    }

    async fn send_inner(&self, message: &Value, timeout: Duration) -> Result<(), McpError> {
        let transport = |e: reqwest::Error| McpError::Transport(e.to_string());
        match &self.kind {
            Kind::Stdio { stdin, .. } => {
                let mut line = serde_json::to_vec(message).expect("JSON values serialize");
                line.push(b'\n');
                let mut stdin = stdin.lock().await;
                stdin.write_all(&line).await.map_err(|e| McpError::Transport(e.to_string()))?;
                stdin.flush().await.map_err(|e| McpError::Transport(e.to_string()))
            }
            Kind::Sse { http, post_url } => {
                let response = http.post(post_url).timeout(timeout).json(message).send().await.map_err(transport)?;
                let status = response.status();
                if !status.is_success() {
                    return Err(McpError::Transport(format!("message endpoint answered HTTP {}", status.as_u16())));
                }
                Ok(())
            }
            Kind::Streamable { http, url, session_id, protocol_version } => {
                let mut request = http
                    .post(url)
                    .timeout(timeout)
                    .header(reqwest::header::ACCEPT, "application/json, text/event-stream")
                    .json(message);
                if let Some(id) = session_id.lock().clone() {
                    request = request.header("Mcp-Session-Id", id);
                }
                if let Some(v) = protocol_version.lock().clone() {
                    request = request.header("MCP-Protocol-Version", v);
                }
                let response = request.send().await.map_err(transport)?;
                let status = response.status();
                if let Some(id) = response.headers().get("mcp-session-id").and_then(|v| v.to_str().ok()) {
                    *session_id.lock() = Some(id.to_string());
                }
                if status == reqwest::StatusCode::NOT_FOUND && session_id.lock().is_some() {
                    return Err(McpError::Transport("session expired".into()));
                }
                if !status.is_success() {
                    let body = response.text().await.unwrap_or_default();
                    // a JSON-RPC error body is still a response
                    if let Ok(msg) = serde_json::from_str::<Value>(&body) {
                        if msg.get("error").is_some() && msg.get("id").is_some_and(|id| !id.is_null()) {
                            self.router.dispatch(msg);
                            return Ok(());
                        }
                    }
                    return Err(McpError::Transport(format!("server answered HTTP {}", status.as_u16())));
                }
                if status == reqwest::StatusCode::ACCEPTED {
                    return Ok(());
                }
                let is_stream = response
                    .headers()
                    .get(reqwest::header::CONTENT_TYPE)
                    .and_then(|v| v.to_str().ok())
                    .is_some_and(|ct| ct.starts_with("text/event-stream"));
                if is_stream {
                    let mut events = response.bytes_stream().eventsource();
                    while let Some(event) = events.next().await {
                        let event = event.map_err(|e| McpError::Transport(e.to_string()))?;
                        if event.event == "message" {
                            if let Ok(msg) = serde_json::from_str(&event.data) {
                                self.router.dispatch(msg);
                            }
                        }
                    }
                } else {
                    let body = response.bytes().await.map_err(transport)?;
                    if !body.is_empty() {
                        let msg = serde_json::from_slice(&body)
                            .map_err(|e| McpError::Transport(format!("invalid JSON-RPC payload: {e}")))?;
                        self.router.dispatch(msg);
                    }
                }
                Ok(())
            }
        }
    }
}
