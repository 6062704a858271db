//! Local calculator servers used by tests and benchmarks: an OpenAPI HTTP
//! service and an MCP server, both with latency and failure injection.
//!
//! Every fixture runs on its own runtime so load generated by the client
//! side never starves the server, and stops when its handle is dropped.

mod mcp;
mod openapi;

use std::net::SocketAddr;
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

pub use mcp::{serve_mcp_fixture, McpFixtureTransport};
pub use openapi::{openapi_document, serve_openapi_fixture};

#[derive(Debug, thiserror::Error)]
pub enum FixtureError {
    #[error("port {0} is already in use")]
    PortInUse(u16),
    #[error("invalid fixture config: {0}")]
    InvalidConfig(String),
    #[error("fixture I/O error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FailureKind {
    /// HTTP 500 response.
    #[default]
    #[serde(rename = "http-500")]
    Http500,
    /// The connection is cut before a complete response is delivered.
    DropConnection,
    /// A JSON-RPC error response (MCP), or HTTP 422 (OpenAPI).
    RpcError,
}

impl FromStr for FailureKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "http-500" => Ok(FailureKind::Http500),
            "drop-connection" => Ok(FailureKind::DropConnection),
            "rpc-error" => Ok(FailureKind::RpcError),
            other => Err(format!("unknown failure kind {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureConfig {
    /// 0 picks a free port.
    pub port: u16,
    pub artificial_latency: Duration,
    /// Probability in [0, 1] that a tool call fails.
    pub failure_rate: f64,
    pub failure_kind: FailureKind,
    /// The first `fail_first` tool calls fail regardless of `failure_rate`.
    pub fail_first: u64,
    /// MCP only: tools per `tools/list` page.
    pub page_size: Option<usize>,
    /// MCP only: answer `initialize` with a result lacking `protocolVersion`.
    pub malformed_initialize: bool,
}

impl Default for FixtureConfig {
    fn default() -> Self {
        Self {
            port: 0,
            artificial_latency: Duration::ZERO,
            failure_rate: 0.0,
            failure_kind: FailureKind::Http500,
            fail_first: 0,
            page_size: None,
            malformed_initialize: false,
        }
    }
}

impl FixtureConfig {
    pub fn on_port(port: u16) -> Self {
        Self { port, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), FixtureError> {
        if !(0.0..=1.0).contains(&self.failure_rate) {
            return Err(FixtureError::InvalidConfig("failure_rate must be within [0, 1]".into()));
        }
        if self.page_size == Some(0) {
            return Err(FixtureError::InvalidConfig("page_size must be positive".into()));
        }
        Ok(())
    }
}

/// Shared state for fault injection and call counting.
pub(crate) struct Injector {
    config: FixtureConfig,
    calls: AtomicU64,
}

impl Injector {
    fn new(config: FixtureConfig) -> Arc<Self> {
        Arc::new(Self { config, calls: AtomicU64::new(0) })
    }

    /// Counts one tool call, applies latency and decides whether it fails.
    async fn begin_call(&self) -> Option<FailureKind> {
        let n = self.calls.fetch_add(1, Ordering::SeqCst);
        if !self.config.artificial_latency.is_zero() {
            tokio::time::sleep(self.config.artificial_latency).await;
        }
        let fail = n < self.config.fail_first
            || (self.config.failure_rate > 0.0 && rand::random::<f64>() < self.config.failure_rate);
        fail.then_some(self.config.failure_kind)
    }
}

/// A running fixture. Dropping it stops the server.
pub struct FixtureHandle {
    addr: SocketAddr,
    injector: Arc<Injector>,
    runtime: Option<tokio::runtime::Runtime>,
    path: &'static str,
}

impl std::fmt::Debug for FixtureHandle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FixtureHandle").field("addr", &self.addr).field("path", &self.path).finish()
    }
}

impl FixtureHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn port(&self) -> u16 {
        self.addr.port()
    }

    /// `http://127.0.0.1:PORT`.
    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// The URL a client should be pointed at: the base URL for the OpenAPI
    /// fixture, `/sse` or `/mcp` for the MCP fixture.
    pub fn url(&self) -> String {
        format!("{}{}", self.base_url(), self.path)
    }

    /// Tool calls received so far.
    pub fn hits(&self) -> u64 {
        self.injector.calls.load(Ordering::SeqCst)
    }

    pub fn shutdown(mut self) {
        self.stop();
    }

    fn stop(&mut self) {
        if let Some(rt) = self.runtime.take() {
            rt.shutdown_background();
        }
    }
}

impl Drop for FixtureHandle {
    fn drop(&mut self) {
        self.stop();
    }
}

fn start(
    config: &FixtureConfig,
    path: &'static str,
    router: impl FnOnce(Arc<Injector>) -> axum::Router,
) -> Result<FixtureHandle, FixtureError> {
    config.validate()?;
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .worker_threads(2)
        .thread_name("toolmesh-fixture")
        .enable_all()
        .build()?;
    let port = config.port;
    let listener = runtime
        .block_on(tokio::net::TcpListener::bind(("127.0.0.1", port)))
        .map_err(|e| match e.kind() {
            std::io::ErrorKind::AddrInUse => FixtureError::PortInUse(port),
            _ => FixtureError::Io(e),
        })?;
    let addr = listener.local_addr()?;
    let injector = Injector::new(config.clone());
    let app = router(injector.clone());
    runtime.spawn(async move {
        let _ = axum::serve(listener, app).await;
    });
    Ok(FixtureHandle { addr, injector, runtime: Some(runtime), path })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn failure_kinds_parse() {
        assert_eq!("drop-connection".parse::<FailureKind>().unwrap(), FailureKind::DropConnection);
        assert!("oops".parse::<FailureKind>().is_err());
        assert_eq!(serde_json::to_value(FailureKind::Http500).unwrap(), "http-500");
    }

    #[test]
    fn config_bounds() {
        assert!(FixtureConfig { failure_rate: 1.5, ..FixtureConfig::default() }.validate().is_err());
        assert!(FixtureConfig { failure_rate: 1.0, ..FixtureConfig::default() }.validate().is_ok());
    }

    #[test]
    fn port_in_use() {
        let first = serve_openapi_fixture(&FixtureConfig::default()).unwrap();
        let err = serve_openapi_fixture(&FixtureConfig::on_port(first.port())).unwrap_err();
        assert!(matches!(err, FixtureError::PortInUse(p) if p == first.port()));
    }
}
