use std::collections::HashMap;
use std::convert::Infallible;
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use axum::body::Body;
use axum::extract::{Query, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures::StreamExt;
use parking_lot::Mutex;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tokio::sync::mpsc;

use super::{start, FailureKind, FixtureConfig, FixtureError, FixtureHandle, Injector};
use crate::hub;
use crate::mcp::SUPPORTED_VERSIONS;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum McpFixtureTransport {
    #[default]
    Sse,
    StreamableHttp,
}

impl FromStr for McpFixtureTransport {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sse" => Ok(Self::Sse),
            "streamable-http" => Ok(Self::StreamableHttp),
            other => Err(format!("unknown MCP transport {other:?}; expected sse or streamable-http")),
        }
    }
}

struct Server {
    injector: Arc<Injector>,
    sessions: Mutex<HashMap<String, mpsc::UnboundedSender<Value>>>,
    next_session: AtomicU64,
}

/// What the server does with one incoming message.
enum Outcome {
    Reply(Value),
    /// Notifications get no reply.
    Silent,
    /// Cut the transport instead of replying.
    Drop,
    /// Fail at the HTTP level.
    Http500,
}

const TOOLS: [(&str, &str); 4] = [
    ("add", "Add two numbers."),
    ("subtract", "Subtract b from a."),
    ("multiply", "Multiply two numbers."),
    ("divide", "Divide a by b."),
];

fn descriptor(name: &str, description: &str) -> Value {
    json!({
        "name": name,
        "description": description,
        "inputSchema": {
            "type": "object",
            "properties": {
                "a": {"type": "number", "description": "first operand"},
                "b": {"type": "number", "description": "second operand"}
            },
            "required": ["a", "b"]
        }
    })
}

fn rpc_result(id: &Value, result: Value) -> Value {
    json!({"jsonrpc": "2.0", "id": id, "result": result})
}

fn rpc_error(id: &Value, code: i64, message: &str) -> Value {
    json!({"jsonrpc": "2.0", "id": id, "error": {"code": code, "message": message}})
}

impl Server {
    async fn handle(&self, message: &Value) -> Outcome {
        let Some(method) = message.get("method").and_then(Value::as_str) else {
            return Outcome::Silent;
        };
        let Some(id) = message.get("id").filter(|id| !id.is_null()) else {
            return Outcome::Silent;
        };
        let params = message.get("params").cloned().unwrap_or_else(|| json!({}));
        let config = &self.injector.config;
        match method {
            "initialize" => {
                if config.malformed_initialize {
                    return Outcome::Reply(rpc_result(id, json!({"server": "calculator"})));
                }
                let requested = params.get("protocolVersion").and_then(Value::as_str).unwrap_or_default();
                let version = if SUPPORTED_VERSIONS.contains(&requested) { requested } else { SUPPORTED_VERSIONS[0] };
                Outcome::Reply(rpc_result(
                    id,
                    json!({
                        "protocolVersion": version,
                        "capabilities": {"tools": {"listChanged": false}},
                        "serverInfo": {"name": "calculator", "version": "1.0.0"}
                    }),
                ))
            }
            "ping" => Outcome::Reply(rpc_result(id, json!({}))),
            "tools/list" => {
                let all: Vec<Value> = TOOLS.iter().map(|(n, d)| descriptor(n, d)).collect();
                let start: usize = params.get("cursor").and_then(Value::as_str).and_then(|c| c.parse().ok()).unwrap_or(0);
                let size = config.page_size.unwrap_or(all.len().max(1));
                let end = (start + size).min(all.len());
                let mut result = json!({"tools": all.get(start..end).unwrap_or_default()});
                if end < all.len() {
                    result["nextCursor"] = json!(end.to_string());
                }
                Outcome::Reply(rpc_result(id, result))
            }
            "tools/call" => {
                match self.injector.begin_call().await {
                    Some(FailureKind::Http500) => return Outcome::Http500,
                    Some(FailureKind::DropConnection) => return Outcome::Drop,
                    Some(FailureKind::RpcError) => {
                        return Outcome::Reply(rpc_error(id, -32603, "injected failure"))
                    }
                    None => {}
                }
                let name = params.get("name").and_then(Value::as_str).unwrap_or_default();
                if !TOOLS.iter().any(|(n, _)| *n == name) {
                    return Outcome::Reply(rpc_error(id, -32602, &format!("unknown tool: {name}")));
                }
                let args = params.get("arguments").cloned().unwrap_or_else(|| json!({}));
                let operand = |k: &str| args.get(k).and_then(Value::as_f64);
                let (Some(a), Some(b)) = (operand("a"), operand("b")) else {
                    return Outcome::Reply(rpc_error(id, -32602, "arguments a and b must be numbers"));
                };
                let result = match hub::calculate(name, a, b) {
                    Ok(v) => json!({"content": [{"type": "text", "text": v.to_string()}], "isError": false}),
                    Err(e) => json!({"content": [{"type": "text", "text": e.message}], "isError": true}),
                };
                Outcome::Reply(rpc_result(id, result))
            }
            other => Outcome::Reply(rpc_error(id, -32601, &format!("method not found: {other}"))),
        }
    }
}

async fn sse_stream(State(server): State<Arc<Server>>) -> impl IntoResponse {
    let id = server.next_session.fetch_add(1, Ordering::SeqCst).to_string();
    let (tx, rx) = mpsc::unbounded_channel::<Value>();
    server.sessions.lock().insert(id.clone(), tx);
    let endpoint = futures::stream::once(async move {
        Ok::<_, Infallible>(Event::default().event("endpoint").data(format!("/messages?session_id={id}")))
    });
    let messages = futures::stream::unfold(rx, |mut rx| async move {
        let msg = rx.recv().await?;
        Some((Ok(Event::default().event("message").data(msg.to_string())), rx))
    });
    Sse::new(endpoint.chain(messages)).keep_alive(KeepAlive::default())
}

async fn sse_message(
    State(server): State<Arc<Server>>,
    Query(query): Query<HashMap<String, String>>,
    Json(message): Json<Value>,
) -> Response {
    let Some(session) = query.get("session_id").cloned() else {
        return (StatusCode::BAD_REQUEST, "missing session_id").into_response();
    };
    if !server.sessions.lock().contains_key(&session) {
        return (StatusCode::NOT_FOUND, "unknown session").into_response();
    }
    match server.handle(&message).await {
        Outcome::Reply(reply) => {
            let tx = server.sessions.lock().get(&session).cloned();
            if tx.is_none_or(|tx| tx.send(reply).is_err()) {
                server.sessions.lock().remove(&session);
            }
            StatusCode::ACCEPTED.into_response()
        }
        Outcome::Silent => StatusCode::ACCEPTED.into_response(),
        Outcome::Http500 => (StatusCode::INTERNAL_SERVER_ERROR, "injected failure").into_response(),
        Outcome::Drop => {
            // ends the client's event stream
            server.sessions.lock().remove(&session);
            StatusCode::ACCEPTED.into_response()
        }
    }
}

async fn streamable_post(State(server): State<Arc<Server>>, headers: HeaderMap, Json(message): Json<Value>) -> Response {
    let is_initialize = message.get("method").and_then(Value::as_str) == Some("initialize");
    let session = headers.get("mcp-session-id").and_then(|v| v.to_str().ok()).map(str::to_string);
    if let Some(s) = &session {
        if !is_initialize && !server.sessions.lock().contains_key(s) {
            return (StatusCode::NOT_FOUND, "unknown session").into_response();
        }
    }
    match server.handle(&message).await {
        Outcome::Reply(reply) => {
            let mut response = Json(reply).into_response();
            if is_initialize && response.status().is_success() {
                let id = server.next_session.fetch_add(1, Ordering::SeqCst).to_string();
                // a placeholder channel: this transport replies inline
                let (tx, _rx) = mpsc::unbounded_channel();
                server.sessions.lock().insert(id.clone(), tx);
                response.headers_mut().insert("mcp-session-id", id.parse().expect("ascii digits"));
            }
            response
        }
        Outcome::Silent => StatusCode::ACCEPTED.into_response(),
        Outcome::Http500 => (StatusCode::INTERNAL_SERVER_ERROR, "injected failure").into_response(),
        Outcome::Drop => {
            let body = futures::stream::once(async {
                Err::<axum::body::Bytes, _>(std::io::Error::new(std::io::ErrorKind::ConnectionAborted, "injected drop"))
            });
            Response::builder()
                .status(StatusCode::OK)
                .header("content-type", "application/json")
                .body(Body::from_stream(body))
                .expect("static response parts")
        }
    }
}

async fn streamable_delete(State(server): State<Arc<Server>>, headers: HeaderMap) -> StatusCode {
    if let Some(s) = headers.get("mcp-session-id").and_then(|v| v.to_str().ok()) {
        server.sessions.lock().remove(s);
    }
    StatusCode::NO_CONTENT
}

/// Serves the four calculator tools as server `calculator`, over SSE
/// (`GET /sse`, `POST /messages`) or streamable HTTP (`POST /mcp`).
pub fn serve_mcp_fixture(
    config: &FixtureConfig,
    transport: McpFixtureTransport,
) -> Result<FixtureHandle, FixtureError> {
    let path = match transport {
        McpFixtureTransport::Sse => "/sse",
        McpFixtureTransport::StreamableHttp => "/mcp",
    };
    start(config, path, move |injector| {
        let server = Arc::new(Server { injector, sessions: Mutex::new(HashMap::new()), next_session: AtomicU64::new(1) });
        let router = match transport {
            McpFixtureTransport::Sse => {
                Router::new().route("/sse", get(sse_stream)).route("/messages", post(sse_message))
            }
            McpFixtureTransport::StreamableHttp => {
                Router::new().route("/mcp", post(streamable_post).delete(streamable_delete))
            }
        };
        router.with_state(server)
    })
}
