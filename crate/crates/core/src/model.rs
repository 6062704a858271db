//! Shared domain types: tool descriptions, calls, results and the naming rules
//! every other module relies on.

use std::fmt;
use std::future::Future;
use std::str::FromStr;
use std::sync::Arc;
use std::time::Duration;

use futures::future::BoxFuture;
use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::manifest::Source;
use crate::schema::JsonSchema;

/// Longest tool name any supported provider accepts.
pub const MAX_NAME_LEN: usize = 64;

/// Separators a namespace may be joined with.
pub const SEPARATORS: [char; 4] = ['.', '_', '-', '/'];

// Order in which replacement separators are tried when a rendered name is
// rejected by the target pattern.
const SUBSTITUTES: [char; 4] = ['_', '-', '.', '/'];

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum NameError {
    #[error("tool name must not be empty")]
    Empty,
    #[error("invalid separator {0:?}; expected one of . _ - /")]
    InvalidSeparator(char),
    #[error("{name:?} is already prefixed with namespace {namespace:?}")]
    AlreadyNamespaced { name: String, namespace: String },
    #[error("no separator substitution makes {0:?} a valid name")]
    Unrenderable(String),
    #[error("{0:?} is longer than 64 characters")]
    TooLong(String),
}

/// Character-level constraint a rendered tool name must satisfy.
#[derive(Debug, Clone)]
pub struct NameConstraint {
    pattern: Regex,
}

impl NameConstraint {
    pub fn new(pattern: &str) -> Result<Self, regex::Error> {
        Ok(Self { pattern: Regex::new(pattern)? })
    }

    /// `A-Za-z0-9_.-`, the default used for registration and rendering.
    pub fn permissive() -> Self {
        Self::new(r"^[A-Za-z0-9_.\-]+$").expect("static pattern")
    }

    /// The OpenAI function-name rule, which forbids `.`.
    pub fn openai_strict() -> Self {
        Self::new(r"^[A-Za-z0-9_-]{1,64}$").expect("static pattern")
    }

    pub fn pattern(&self) -> &str {
        self.pattern.as_str()
    }

    pub fn is_match(&self, name: &str) -> bool {
        self.pattern.is_match(name)
    }
}

impl Default for NameConstraint {
    fn default() -> Self {
        Self::permissive()
    }
}

impl PartialEq for NameConstraint {
    fn eq(&self, other: &Self) -> bool {
        self.pattern.as_str() == other.pattern.as_str()
    }
}

/// Joins `namespace` and `raw` with `separator` and makes the result conform
/// to `constraint`, substituting the separator if necessary.
pub fn render_tool_name(
    raw: &str,
    namespace: Option<&str>,
    separator: char,
    constraint: &NameConstraint,
) -> Result<String, NameError> {
    if raw.is_empty() {
        return Err(NameError::Empty);
    }
    if !SEPARATORS.contains(&separator) {
        return Err(NameError::InvalidSeparator(separator));
    }
    let candidate = match namespace {
        Some(ns) if !ns.is_empty() => {
            let prefix = format!("{ns}{separator}");
            if raw.starts_with(&prefix) {
                return Err(NameError::AlreadyNamespaced {
                    name: raw.to_string(),
                    namespace: ns.to_string(),
                });
            }
            format!("{prefix}{raw}")
        }
        _ => raw.to_string(),
    };
    conform_name(&candidate, separator, constraint)
}

/// Re-renders an existing (possibly namespaced) name for `constraint`.
pub fn conform_name(
    name: &str,
    separator: char,
    constraint: &NameConstraint,
) -> Result<String, NameError> {
    if name.chars().count() > MAX_NAME_LEN {
        return Err(NameError::TooLong(name.to_string()));
    }
    if constraint.is_match(name) {
        return Ok(name.to_string());
    }
    if name.contains(separator) {
        for sub in SUBSTITUTES.iter().filter(|c| **c != separator) {
            let replaced = name.replace(separator, &sub.to_string());
            if constraint.is_match(&replaced) {
                return Ok(replaced);
            }
        }
    }
    Err(NameError::Unrenderable(name.to_string()))
}

/// Where a tool came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    Native,
    Toolset,
    OpenApi,
    Mcp,
    Foreign,
}

impl Origin {
    pub fn label(self) -> &'static str {
        match self {
            Origin::Native => "native",
            Origin::Toolset => "toolset",
            Origin::OpenApi => "openapi",
            Origin::Mcp => "mcp",
            Origin::Foreign => "foreign",
        }
    }
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Origin {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "native" => Ok(Origin::Native),
            "toolset" => Ok(Origin::Toolset),
            "openapi" => Ok(Origin::OpenApi),
            "mcp" => Ok(Origin::Mcp),
            "foreign" => Ok(Origin::Foreign),
            other => Err(format!("unknown origin {other:?}")),
        }
    }
}

/// Wire formats tool schemas and messages can be rendered to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ApiFormat {
    ChatCompletion,
    Response,
}

impl ApiFormat {
    pub const ALL: [ApiFormat; 2] = [ApiFormat::ChatCompletion, ApiFormat::Response];

    pub fn label(self) -> &'static str {
        match self {
            ApiFormat::ChatCompletion => "openai-chatcompletion",
            ApiFormat::Response => "openai-response",
        }
    }
}

impl fmt::Display for ApiFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for ApiFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "openai-chatcompletion" => Ok(ApiFormat::ChatCompletion),
            "openai-response" => Ok(ApiFormat::Response),
            other => Err(format!(
                "unknown API format {other:?}; expected openai-chatcompletion or openai-response"
            )),
        }
    }
}

/// Executor concurrency model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExecutionMode {
    /// Concurrent workers in one address space.
    Shared,
    /// Separate worker processes exchanging framed messages.
    Isolated,
}

impl ExecutionMode {
    pub fn label(self) -> &'static str {
        match self {
            ExecutionMode::Shared => "shared",
            ExecutionMode::Isolated => "isolated",
        }
    }
}

impl fmt::Display for ExecutionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for ExecutionMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "shared" | "thread" => Ok(ExecutionMode::Shared),
            "isolated" | "process" => Ok(ExecutionMode::Isolated),
            other => Err(format!("unknown execution mode {other:?}")),
        }
    }
}

/// Type of one parameter, from which its schema is derived.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParamKind {
    String,
    Integer,
    Number,
    Boolean,
    Null,
    Array(Box<ParamKind>),
    Object(Vec<ParamSpec>),
    Enum(Vec<Value>),
    Union(Vec<ParamKind>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    pub kind: ParamKind,
    #[serde(default)]
    pub required: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
}

impl ParamSpec {
    pub fn required(name: impl Into<String>, kind: ParamKind) -> Self {
        Self { name: name.into(), kind, required: true, default: None, description: None }
    }

    pub fn optional(name: impl Into<String>, kind: ParamKind) -> Self {
        Self { name: name.into(), kind, required: false, default: None, description: None }
    }

    pub fn with_default(mut self, default: Value) -> Self {
        self.default = Some(default);
        self
    }

    pub fn describe(mut self, text: impl Into<String>) -> Self {
        self.description = Some(text.into());
        self
    }
}

/// Explicit signature of a callable. This is what a schema is derived from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignatureDescriptor {
    #[serde(alias = "name")]
    pub tool_name: String,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub params: Vec<ParamSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub returns_description: Option<String>,
}

impl SignatureDescriptor {
    pub fn new(tool_name: impl Into<String>, description: impl Into<String>) -> Self {
        Self {
            tool_name: tool_name.into(),
            description: description.into(),
            params: Vec::new(),
            returns_description: None,
        }
    }

    pub fn param(mut self, spec: ParamSpec) -> Self {
        self.params.push(spec);
        self
    }

    pub fn returns(mut self, text: impl Into<String>) -> Self {
        self.returns_description = Some(text.into());
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ErrorCategory {
    /// Worth retrying with backoff.
    Transient,
    Permanent,
}

impl ErrorCategory {
    pub fn label(self) -> &'static str {
        match self {
            ErrorCategory::Transient => "transient",
            ErrorCategory::Permanent => "permanent",
        }
    }
}

impl fmt::Display for ErrorCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ToolErrorKind {
    /// The tool itself reported a failure.
    Raised { transient: bool },
    Timeout,
    HttpStatus(u16),
    ConnectionFailed,
    Rpc { code: i64, transport: bool },
    InvalidArguments,
    UnknownTool,
    WorkerCrashed,
    RequiresIsolation,
    Internal,
}

/// Failure of a single tool invocation.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{message}")]
pub struct ToolError {
    pub kind: ToolErrorKind,
    pub message: String,
    /// Server-requested delay before retrying (HTTP `Retry-After`).
    pub retry_after: Option<Duration>,
}

impl ToolError {
    pub fn new(kind: ToolErrorKind, message: impl Into<String>) -> Self {
        Self { kind, message: message.into(), retry_after: None }
    }

    pub fn raised(message: impl Into<String>) -> Self {
        Self::new(ToolErrorKind::Raised { transient: false }, message)
    }

    pub fn raised_transient(message: impl Into<String>) -> Self {
        Self::new(ToolErrorKind::Raised { transient: true }, message)
    }

    pub fn timeout(after: Duration) -> Self {
        Self::new(ToolErrorKind::Timeout, format!("timed out after {} ms", after.as_millis()))
    }

    pub fn category(&self) -> ErrorCategory {
        match self.kind {
            ToolErrorKind::Raised { transient: true }
            | ToolErrorKind::Timeout
            | ToolErrorKind::ConnectionFailed
            | ToolErrorKind::Rpc { transport: true, .. } => ErrorCategory::Transient,
            ToolErrorKind::HttpStatus(code) if code == 429 || (500..600).contains(&code) => {
                ErrorCategory::Transient
            }
            _ => ErrorCategory::Permanent,
        }
    }
}

pub type ToolResult = Result<Value, ToolError>;

type SyncFn = dyn Fn(Value) -> ToolResult + Send + Sync;
type AsyncFn = dyn Fn(Value) -> BoxFuture<'static, ToolResult> + Send + Sync;

/// Invocation handle mapping a JSON argument object to a JSON result.
#[derive(Clone)]
pub enum Invoker {
    Sync(Arc<SyncFn>),
    Async(Arc<AsyncFn>),
}

impl Invoker {
    pub fn sync<F>(f: F) -> Self
    where
        F: Fn(Value) -> ToolResult + Send + Sync + 'static,
    {
        Invoker::Sync(Arc::new(f))
    }

    pub fn from_async<F, Fut>(f: F) -> Self
    where
        F: Fn(Value) -> Fut + Send + Sync + 'static,
        Fut: Future<Output = ToolResult> + Send + 'static,
    {
        Invoker::Async(Arc::new(move |args| Box::pin(f(args))))
    }

    pub fn is_async(&self) -> bool {
        matches!(self, Invoker::Async(_))
    }

    /// Identity comparison: two handles are equal when they share one callable.
    pub fn same_as(&self, other: &Invoker) -> bool {
        match (self, other) {
            (Invoker::Sync(a), Invoker::Sync(b)) => Arc::ptr_eq(a, b),
            (Invoker::Async(a), Invoker::Async(b)) => Arc::ptr_eq(a, b),
            _ => false,
        }
    }
}

impl fmt::Debug for Invoker {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Invoker::Sync(_) => f.write_str("Invoker::Sync"),
            Invoker::Async(_) => f.write_str("Invoker::Async"),
        }
    }
}

/// How a worker process can rebuild a tool: the registration source and the
/// name the tool had when that source was registered.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Replica {
    pub source: Source,
    pub name: String,
}

/// A unified, stateless description and invoker for one callable capability.
#[derive(Clone)]
pub struct Tool {
    name: String,
    description: String,
    parameters: JsonSchema,
    invoker: Invoker,
    origin: Origin,
    replica: Option<Arc<Replica>>,
    isolated_only: bool,
    redactions: Arc<[String]>,
}

impl Tool {
    pub fn new(
        name: impl Into<String>,
        description: impl Into<String>,
        parameters: JsonSchema,
        invoker: Invoker,
        origin: Origin,
    ) -> Self {
        Self {
            name: name.into(),
            description: description.into(),
            parameters,
            invoker,
            origin,
            replica: None,
            isolated_only: false,
            redactions: Arc::from(Vec::new()),
        }
    }

    /// Builds a native tool from an explicit signature.
    pub fn from_descriptor(
        descriptor: &SignatureDescriptor,
        invoker: Invoker,
    ) -> Result<Self, crate::schema::SchemaError> {
        crate::schema::check_descriptor(descriptor)?;
        let parameters = crate::schema::derive_schema(descriptor);
        Ok(Self::new(
            descriptor.tool_name.clone(),
            descriptor.description.clone(),
            parameters,
            invoker,
            Origin::Native,
        ))
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn description(&self) -> &str {
        &self.description
    }

    pub fn parameters(&self) -> &JsonSchema {
        &self.parameters
    }

    pub fn invoker(&self) -> &Invoker {
        &self.invoker
    }

    pub fn is_async(&self) -> bool {
        self.invoker.is_async()
    }

    pub fn origin(&self) -> Origin {
        self.origin
    }

    pub fn replica(&self) -> Option<&Replica> {
        self.replica.as_deref()
    }

    /// Whether a worker process can rebuild this tool from declarative data.
    pub fn is_replicable(&self) -> bool {
        self.replica.is_some()
    }

    /// Tools that terminate their host are never run in shared mode.
    pub fn is_isolated_only(&self) -> bool {
        self.isolated_only
    }

    /// Secrets that must never appear in error messages produced by this tool.
    pub fn redactions(&self) -> &[String] {
        &self.redactions
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn with_origin(mut self, origin: Origin) -> Self {
        self.origin = origin;
        self
    }

    pub fn with_replica(mut self, replica: Replica) -> Self {
        self.replica = Some(Arc::new(replica));
        self
    }

    pub fn without_replica(mut self) -> Self {
        self.replica = None;
        self
    }

    pub fn isolated_only(mut self, yes: bool) -> Self {
        self.isolated_only = yes;
        self
    }

    pub fn with_redactions(mut self, secrets: Vec<String>) -> Self {
        self.redactions = Arc::from(secrets);
        self
    }
}

impl PartialEq for Tool {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name
            && self.description == other.description
            && self.parameters == other.parameters
            && self.origin == other.origin
            && self.isolated_only == other.isolated_only
            && self.replica == other.replica
            && self.invoker.same_as(&other.invoker)
    }
}

impl fmt::Debug for Tool {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tool")
            .field("name", &self.name)
            .field("origin", &self.origin)
            .field("is_async", &self.is_async())
            .field("replicable", &self.is_replicable())
            .finish()
    }
}

/// A normalized invocation request.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolCall {
    pub id: String,
    pub name: String,
    /// Raw JSON text of the argument object, exactly as the provider sent it.
    pub arguments: String,
}

impl ToolCall {
    pub fn new(id: impl Into<String>, name: impl Into<String>, arguments: impl Into<String>) -> Self {
        Self { id: id.into(), name: name.into(), arguments: arguments.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CallError {
    pub category: ErrorCategory,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
enum Outcome {
    Ok(Value),
    Err(CallError),
}

/// Outcome of one [`ToolCall`]. Holds either a value or an error, never both.
#[derive(Debug, Clone, PartialEq)]
pub struct ToolCallResult {
    id: String,
    name: String,
    outcome: Outcome,
    metadata: Map<String, Value>,
}

impl ToolCallResult {
    pub fn ok(id: impl Into<String>, name: impl Into<String>, value: Value) -> Self {
        Self { id: id.into(), name: name.into(), outcome: Outcome::Ok(value), metadata: Map::new() }
    }

    pub fn error(
        id: impl Into<String>,
        name: impl Into<String>,
        category: ErrorCategory,
        message: impl Into<String>,
    ) -> Self {
        Self {
            id: id.into(),
            name: name.into(),
            outcome: Outcome::Err(CallError { category, message: message.into() }),
            metadata: Map::new(),
        }
    }

    /// Error result whose message has every `secret` masked.
    pub fn sanitized_error(
        id: impl Into<String>,
        name: impl Into<String>,
        category: ErrorCategory,
        message: &str,
        secrets: &[String],
    ) -> Self {
        Self::error(id, name, category, sanitize(message, secrets))
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn is_ok(&self) -> bool {
        matches!(self.outcome, Outcome::Ok(_))
    }

    pub fn status(&self) -> &'static str {
        if self.is_ok() {
            "ok"
        } else {
            "error"
        }
    }

    pub fn value(&self) -> Option<&Value> {
        match &self.outcome {
            Outcome::Ok(v) => Some(v),
            Outcome::Err(_) => None,
        }
    }

    pub fn error_info(&self) -> Option<&CallError> {
        match &self.outcome {
            Outcome::Ok(_) => None,
            Outcome::Err(e) => Some(e),
        }
    }

    pub fn metadata(&self) -> &Map<String, Value> {
        &self.metadata
    }

    pub fn set_metadata(&mut self, key: &str, value: Value) {
        self.metadata.insert(key.to_string(), value);
    }

    pub fn with_metadata(mut self, key: &str, value: Value) -> Self {
        self.set_metadata(key, value);
        self
    }

    /// `{"id","name","status","value"|"error","metadata"}`.
    pub fn to_json(&self) -> Value {
        let mut out = Map::new();
        out.insert("id".into(), Value::String(self.id.clone()));
        out.insert("name".into(), Value::String(self.name.clone()));
        out.insert("status".into(), Value::String(self.status().into()));
        match &self.outcome {
            Outcome::Ok(v) => {
                out.insert("value".into(), v.clone());
            }
            Outcome::Err(e) => {
                out.insert(
                    "error".into(),
                    serde_json::json!({"category": e.category.label(), "message": e.message}),
                );
            }
        }
        if !self.metadata.is_empty() {
            out.insert("metadata".into(), Value::Object(self.metadata.clone()));
        }
        Value::Object(out)
    }
}

/// Masks every non-empty secret occurring in `message`.
pub fn sanitize(message: &str, secrets: &[String]) -> String {
    let mut out = message.to_string();
    let mut sorted: Vec<&String> = secrets.iter().filter(|s| !s.is_empty()).collect();
    // longest first so a secret containing another is masked whole
    sorted.sort_by_key(|s| std::cmp::Reverse(s.len()));
    for secret in sorted {
        out = out.replace(secret.as_str(), "***");
    }
    out
}

/// Converts an `f64` into a JSON number, using an integer representation for
/// integral values that fit exactly.
pub fn number_value(x: f64) -> Option<Value> {
    const EXACT: f64 = 9_007_199_254_740_992.0; // 2^53
    if !x.is_finite() {
        return None;
    }
    if x.fract() == 0.0 && x.abs() < EXACT {
        // -0.0 collapses to 0, which JSON cannot distinguish anyway
        return Some(Value::from(x as i64));
    }
    serde_json::Number::from_f64(x).map(Value::Number)
}
