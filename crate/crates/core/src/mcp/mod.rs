//! Model Context Protocol client and MCP-backed tools.
//!
//! A session performs the `initialize` handshake, then issues `tools/list`
//! and `tools/call`. [`McpClient`] owns one session per endpoint and
//! reconnects on demand.

mod transport;

use std::collections::{BTreeMap, HashSet};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::manifest::{default_namespace, Namespace, Source};
use crate::model::{Invoker, Origin, Tool, ToolError, ToolErrorKind};
use crate::registry::{RegistryError, ToolRegistry};
use crate::schema::dialect::normalize_root;
use crate::schema::{JsonSchema, SchemaError};
use transport::Connection;

/// Protocol revisions this client implements, newest first.
pub const SUPPORTED_VERSIONS: [&str; 3] = ["2025-06-18", "2025-03-26", "2024-11-05"];

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum McpError {
    #[error("MCP server unreachable: {0}")]
    TransportUnreachable(String),
    #[error("MCP handshake rejected: {0}")]
    HandshakeRejected(String),
    #[error("MCP protocol version {0:?} is not supported")]
    VersionUnsupported(String),
    #[error("JSON-RPC error {code}: {message}")]
    Rpc { code: i64, message: String },
    #[error("MCP transport error: {0}")]
    Transport(String),
    #[error("MCP request timed out after {0} ms")]
    Timeout(u128),
    #[error("{0}")]
    ToolRaised(String),
    #[error("invalid MCP endpoint: {0}")]
    InvalidEndpoint(String),
    #[error("tool {tool:?}: {source}")]
    Schema { tool: String, source: SchemaError },
    #[error("invalid tool descriptor: {0}")]
    InvalidDescriptor(String),
    #[error(transparent)]
    Registry(#[from] RegistryError),
}

impl McpError {
    pub fn is_transient(&self) -> bool {
        matches!(self, McpError::TransportUnreachable(_) | McpError::Transport(_) | McpError::Timeout(_))
    }

    pub fn into_tool_error(self) -> ToolError {
        let message = self.to_string();
        match self {
            McpError::Timeout(_) => ToolError::new(ToolErrorKind::Timeout, message),
            McpError::Transport(_) | McpError::TransportUnreachable(_) => {
                ToolError::new(ToolErrorKind::Rpc { code: 0, transport: true }, message)
            }
            McpError::Rpc { code, .. } => ToolError::new(ToolErrorKind::Rpc { code, transport: false }, message),
            McpError::ToolRaised(m) => ToolError::raised(m),
            _ => ToolError::new(ToolErrorKind::Internal, message),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "transport", rename_all = "kebab-case")]
pub enum McpTransport {
    Stdio {
        command: String,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        args: Vec<String>,
        #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
        env: BTreeMap<String, String>,
    },
    Sse {
        url: String,
    },
    StreamableHttp {
        url: String,
    },
}

fn default_request_timeout() -> f64 {
    30.0
}

fn is_default_request_timeout(t: &f64) -> bool {
    *t == default_request_timeout()
}

/// Where and how to reach an MCP server.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McpEndpoint {
    #[serde(flatten)]
    pub transport: McpTransport,
    #[serde(default = "default_request_timeout", skip_serializing_if = "is_default_request_timeout")]
    pub request_timeout_secs: f64,
}

impl McpEndpoint {
    pub fn new(transport: McpTransport) -> Self {
        Self { transport, request_timeout_secs: default_request_timeout() }
    }

    /// `…/sse` selects the legacy SSE transport, anything else streamable HTTP.
    pub fn from_url(url: &str) -> Result<Self, McpError> {
        let trimmed = url.trim_end_matches('/');
        let transport = if trimmed.ends_with("/sse") {
            McpTransport::Sse { url: url.to_string() }
        } else {
            McpTransport::StreamableHttp { url: url.to_string() }
        };
        let endpoint = Self::new(transport);
        endpoint.validate()?;
        Ok(endpoint)
    }

    pub fn stdio(command: impl Into<String>, args: Vec<String>) -> Self {
        Self::new(McpTransport::Stdio { command: command.into(), args, env: BTreeMap::new() })
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.request_timeout_secs = timeout.as_secs_f64();
        self
    }

    pub fn request_timeout(&self) -> Duration {
        Duration::from_secs_f64(self.request_timeout_secs)
    }

    pub fn validate(&self) -> Result<(), McpError> {
        if !(self.request_timeout_secs.is_finite() && self.request_timeout_secs > 0.0) {
            return Err(McpError::InvalidEndpoint("request timeout must be positive".into()));
        }
        match &self.transport {
            McpTransport::Stdio { command, .. } if command.trim().is_empty() => {
                Err(McpError::InvalidEndpoint("stdio command must not be empty".into()))
            }
            McpTransport::Stdio { .. } => Ok(()),
            McpTransport::Sse { url } | McpTransport::StreamableHttp { url } => match url::Url::parse(url) {
                Ok(u) if matches!(u.scheme(), "http" | "https") => Ok(()),
                _ => Err(McpError::InvalidEndpoint(format!("{url:?} is not an http(s) URL"))),
            },
        }
    }
}

/// An initialized connection to one server.
#[derive(Clone)]
pub struct McpSession {
    inner: Arc<SessionInner>,
}

struct SessionInner {
    connection: Connection,
    next_id: AtomicU64,
    protocol_version: String,
    server_name: String,
    capabilities: Value,
    timeout: Duration,
}

impl std::fmt::Debug for McpSession {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("McpSession")
            .field("server_name", &self.inner.server_name)
            .field("protocol_version", &self.inner.protocol_version)
            .finish()
    }
}

impl McpSession {
    pub async fn connect(endpoint: &McpEndpoint) -> Result<Self, McpError> {
        endpoint.validate()?;
        let timeout = endpoint.request_timeout();
        let connection = Connection::open(&endpoint.transport, timeout).await?;
        let mut inner = SessionInner {
            connection,
            next_id: AtomicU64::new(1),
            protocol_version: String::new(),
            server_name: String::new(),
            capabilities: Value::Null,
            timeout,
        };
        let init = inner
            .request(
                "initialize",
                json!({
                    "protocolVersion": SUPPORTED_VERSIONS[0],
                    "capabilities": {},
                    "clientInfo": {"name": "toolmesh", "version": env!("CARGO_PKG_VERSION")},
                }),
            )
            .await
            .map_err(|e| match e {
                McpError::Rpc { code, message } => McpError::HandshakeRejected(format!("error {code}: {message}")),
                McpError::Transport(m) => McpError::TransportUnreachable(m),
                McpError::Timeout(_) => McpError::TransportUnreachable("initialize timed out".into()),
                other => other,
            })?;
        let version = init
            .get("protocolVersion")
            .and_then(Value::as_str)
            .ok_or_else(|| McpError::HandshakeRejected("initialize result has no protocolVersion".into()))?;
        if !SUPPORTED_VERSIONS.contains(&version) {
            return Err(McpError::VersionUnsupported(version.to_string()));
        }
        let server_name = init
            .pointer("/serverInfo/name")
            .and_then(Value::as_str)
            .ok_or_else(|| McpError::HandshakeRejected("initialize result has no serverInfo.name".into()))?;
        inner.protocol_version = version.to_string();
        inner.server_name = server_name.to_string();
        inner.capabilities = init.get("capabilities").cloned().unwrap_or_else(|| json!({}));
        inner.connection.set_protocol_version(version);
        inner.notify("notifications/initialized", json!({})).await?;
        Ok(Self { inner: Arc::new(inner) })
    }

    pub fn server_name(&self) -> &str {
        &self.inner.server_name
    }

    pub fn protocol_version(&self) -> &str {
        &self.inner.protocol_version
    }

    pub fn capabilities(&self) -> &Value {
        &self.inner.capabilities
    }

    pub fn is_alive(&self) -> bool {
        !self.inner.connection.router.is_closed()
    }

    /// The id the next request will use.
    pub fn peek_next_id(&self) -> u64 {
        self.inner.next_id.load(Ordering::SeqCst)
    }

    pub async fn request(&self, method: &str, params: Value) -> Result<Value, McpError> {
        self.inner.request(method, params).await
    }

    /// All tool descriptors, following pagination cursors. Duplicate names
    /// across pages keep their first occurrence.
    pub async fn list_tools(&self) -> Result<Vec<Value>, McpError> {
        let mut out = Vec::new();
        let mut seen = HashSet::new();
        let mut cursors = HashSet::new();
        let mut cursor: Option<String> = None;
        loop {
            let params = match &cursor {
                Some(c) => json!({"cursor": c}),
                None => json!({}),
            };
            let page = self.request("tools/list", params).await?;
            let tools = page
                .get("tools")
                .and_then(Value::as_array)
                .ok_or_else(|| McpError::InvalidDescriptor("tools/list result has no tools array".into()))?;
            for t in tools {
                let name = t.get("name").and_then(Value::as_str).unwrap_or_default().to_string();
                if seen.insert(name) {
                    out.push(t.clone());
                }
            }
            match page.get("nextCursor").and_then(Value::as_str) {
                Some(next) if !next.is_empty() && cursors.insert(next.to_string()) => cursor = Some(next.to_string()),
                _ => return Ok(out),
            }
        }
    }

    pub async fn call_tool(&self, name: &str, arguments: &Value) -> Result<Value, McpError> {
        let result = self.request("tools/call", json!({"name": name, "arguments": arguments})).await?;
        reduce_call_result(&result)
    }
}

impl SessionInner {
    async fn request(&self, method: &str, params: Value) -> Result<Value, McpError> {
        let id = self.next_id.fetch_add(1, Ordering::SeqCst);
        let router = &self.connection.router;
        let rx = router.register(id)?;
        let message = json!({"jsonrpc": "2.0", "id": id, "method": method, "params": params});
        let exchange = async {
            self.connection.send(&message, self.timeout).await?;
            rx.await.unwrap_or_else(|_| Err(McpError::Transport("connection closed".into())))
        };
        match tokio::time::timeout(self.timeout, exchange).await {
            Ok(r) => {
                router.forget(id);
                r
            }
            Err(_) => {
                router.forget(id);
                Err(McpError::Timeout(self.timeout.as_millis()))
            }
        }
    }

    async fn notify(&self, method: &str, params: Value) -> Result<(), McpError> {
        let message = json!({"jsonrpc": "2.0", "method": method, "params": params});
        self.connection.send(&message, self.timeout).await
    }
}

fn block_payload(block: &Value) -> Value {
    match (block.get("type").and_then(Value::as_str), block.get("text").and_then(Value::as_str)) {
        (Some("text"), Some(text)) => serde_json::from_str(text).unwrap_or_else(|_| Value::String(text.to_string())),
        _ => block.clone(),
    }
}

/// Reduces a `tools/call` result to one JSON value: a single text block is
/// parsed as JSON when possible, several blocks become an array, and
/// `isError` results become [`McpError::ToolRaised`].
pub fn reduce_call_result(result: &Value) -> Result<Value, McpError> {
    let blocks = result.get("content").and_then(Value::as_array).cloned().unwrap_or_default();
    if result.get("isError").and_then(Value::as_bool).unwrap_or(false) {
        let text: Vec<&str> = blocks.iter().filter_map(|b| b.get("text").and_then(Value::as_str)).collect();
        let message = if text.is_empty() { "tool reported an error".to_string() } else { text.join("\n") };
        return Err(McpError::ToolRaised(message));
    }
    match blocks.len() {
        0 => Ok(result.get("structuredContent").cloned().unwrap_or(Value::Null)),
        1 => Ok(block_payload(&blocks[0])),
        _ => Ok(Value::Array(blocks.iter().map(block_payload).collect())),
    }
}

/// Connects over `endpoint` (blocking).
pub fn mcp_connect(endpoint: &McpEndpoint) -> Result<McpSession, McpError> {
    let endpoint = endpoint.clone();
    crate::runtime::block_on(async move { McpSession::connect(&endpoint).await })
}

/// Blocking `tools/list` with pagination.
pub fn list_tools(session: &McpSession) -> Result<Vec<Value>, McpError> {
    let session = session.clone();
    crate::runtime::block_on(async move { session.list_tools().await })
}

/// Blocking `tools/call`.
pub fn call_tool(session: &McpSession, name: &str, arguments: &Value) -> Result<Value, McpError> {
    let (session, name, arguments) = (session.clone(), name.to_string(), arguments.clone());
    crate::runtime::block_on(async move { session.call_tool(&name, &arguments).await })
}

/// Connects and disconnects once.
pub fn probe(endpoint: &McpEndpoint) -> Result<(), McpError> {
    mcp_connect(endpoint).map(drop)
}

/// Owns the session for one endpoint. A dead session is replaced on the next
/// call; connecting is attempted twice before giving up.
pub struct McpClient {
    endpoint: McpEndpoint,
    session: tokio::sync::Mutex<Option<McpSession>>,
}

impl McpClient {
    pub fn new(endpoint: McpEndpoint) -> Self {
        Self { endpoint, session: tokio::sync::Mutex::new(None) }
    }

    pub fn with_session(endpoint: McpEndpoint, session: McpSession) -> Self {
        Self { endpoint, session: tokio::sync::Mutex::new(Some(session)) }
    }

    pub fn endpoint(&self) -> &McpEndpoint {
        &self.endpoint
    }

    pub async fn session(&self) -> Result<McpSession, McpError> {
        let mut slot = self.session.lock().await;
        if let Some(s) = slot.as_ref().filter(|s| s.is_alive()) {
            return Ok(s.clone());
        }
        *slot = None;
        let session = match McpSession::connect(&self.endpoint).await {
            Ok(s) => s,
            Err(e) if e.is_transient() => McpSession::connect(&self.endpoint)
                .await
                .map_err(|e| McpError::TransportUnreachable(e.to_string()))?,
            Err(e) => return Err(e),
        };
        *slot = Some(session.clone());
        Ok(session)
    }

    pub async fn call_tool(&self, name: &str, arguments: &Value) -> Result<Value, McpError> {
        let session = self.session().await?;
        session.call_tool(name, arguments).await
    }
}

/// Translates an MCP tool descriptor into a [`Tool`] bound to `client`.
pub fn tool_from_mcp_descriptor(descriptor: &Value, client: &Arc<McpClient>) -> Result<Tool, McpError> {
    let name = descriptor
        .get("name")
        .and_then(Value::as_str)
        .filter(|n| !n.is_empty())
        .ok_or_else(|| McpError::InvalidDescriptor("descriptor has no name".into()))?
        .to_string();
    let description = descriptor.get("description").and_then(Value::as_str).unwrap_or_default();
    let parameters = match descriptor.get("inputSchema") {
        None | Some(Value::Null) => JsonSchema::empty_object(),
        Some(schema) => {
            normalize_root(schema, schema).map_err(|source| McpError::Schema { tool: name.clone(), source })?
        }
    };
    let (client, remote) = (client.clone(), name.clone());
    let invoker = Invoker::from_async(move |args: Value| {
        let (client, remote) = (client.clone(), remote.clone());
        async move { client.call_tool(&remote, &args).await.map_err(McpError::into_tool_error) }
    });
    Ok(Tool::new(name, description, parameters, invoker, Origin::Mcp))
}

/// Connects, lists and registers every server tool. With
/// `Namespace::Default` the namespace is the server's declared name
/// lowercased.
pub fn register_from_mcp(
    registry: &mut ToolRegistry,
    endpoint: &McpEndpoint,
    namespace: &Namespace,
) -> Result<Vec<String>, McpError> {
    let session = mcp_connect(endpoint)?;
    let descriptors = list_tools(&session)?;
    let server_name = session.server_name().to_string();
    let client = Arc::new(McpClient::with_session(endpoint.clone(), session));
    let tools = descriptors
        .iter()
        .map(|d| tool_from_mcp_descriptor(d, &client))
        .collect::<Result<Vec<_>, _>>()?;
    let ns = match namespace {
        Namespace::Default => Some(default_namespace(&server_name)),
        other => other.resolve(&server_name),
    };
    let replica = Source::Mcp { endpoint: endpoint.clone(), namespace: namespace.clone() };
    Ok(registry.register_batch(tools, ns.as_deref(), Some(replica))?)
}
