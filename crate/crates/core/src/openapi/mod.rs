//! OpenAPI 3.0/3.1 documents as HTTP-backed tools.
//!
//! Each operation becomes one tool whose parameter schema is the flat union
//! of its path, query and header parameters and the properties of its JSON
//! request body. The location of every property is kept in the operation's
//! bindings so invocation can put each argument back where it belongs.

mod client;

use std::collections::BTreeMap;
use std::sync::Arc;

use regex::Regex;
use serde_json::{json, Map, Value};

use crate::manifest::{Namespace, Source};
use crate::model::{Invoker, Origin, Tool};
use crate::registry::{RegistryError, ToolRegistry};
use crate::schema::dialect::{normalize, resolve_pointer};
use crate::schema::{JsonSchema, SchemaError};

pub use client::{invoke_http_operation, Auth, HttpClient, HttpClientConfig};

#[derive(Debug, thiserror::Error)]
pub enum OpenApiError {
    #[error("cannot fetch OpenAPI document: {0}")]
    Fetch(String),
    #[error("cannot parse OpenAPI document: {0}")]
    Parse(String),
    #[error("unsupported OpenAPI version {0:?}; expected 3.0.x or 3.1.x")]
    UnsupportedVersion(String),
    #[error("operation {operation}: {source}")]
    Schema { operation: String, source: SchemaError },
    #[error("operation {operation}: {reason}")]
    InvalidOperation { operation: String, reason: String },
    #[error("operation {operation}: parameter {name:?} is bound to more than one location")]
    ParameterCollision { operation: String, name: String },
    #[error("invalid HTTP client config: {0}")]
    InvalidConfig(String),
    #[error("no base URL: {0}")]
    NoBaseUrl(String),
    #[error(transparent)]
    Registry(#[from] RegistryError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum HttpMethod {
    Get,
    Post,
    Put,
    Patch,
    Delete,
}

impl HttpMethod {
    pub const ALL: [HttpMethod; 5] =
        [HttpMethod::Get, HttpMethod::Post, HttpMethod::Put, HttpMethod::Patch, HttpMethod::Delete];

    pub fn as_str(self) -> &'static str {
        match self {
            HttpMethod::Get => "get",
            HttpMethod::Post => "post",
            HttpMethod::Put => "put",
            HttpMethod::Patch => "patch",
            HttpMethod::Delete => "delete",
        }
    }

    pub fn admits_body(self) -> bool {
        matches!(self, HttpMethod::Post | HttpMethod::Put | HttpMethod::Patch)
    }
}

/// Where an argument goes in the HTTP request.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Location {
    Path,
    Query,
    Header,
    /// A property of the JSON request body object.
    BodyField,
    /// The whole request body (non-object bodies).
    Body,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HttpOperation {
    pub operation_id: String,
    pub method: HttpMethod,
    pub path_template: String,
    /// Argument name → location, in schema order.
    pub bindings: Vec<(String, Location)>,
    pub request_body_content_type: Option<String>,
}

/// One operation ready to become a tool.
#[derive(Debug, Clone)]
pub struct OperationEntry {
    pub tool_name: String,
    pub description: String,
    pub parameters: JsonSchema,
    pub http: Arc<HttpOperation>,
}

/// A loaded document with its operations enumerated.
#[derive(Debug, Clone)]
pub struct OpenApiSpec {
    pub document: Value,
    pub title: String,
    pub version: String,
    pub operations: Vec<OperationEntry>,
    /// The location the document was loaded from, as given.
    pub source: String,
    /// The URL the document was actually fetched from, if any.
    pub fetched_from: Option<String>,
}

impl OpenApiSpec {
    /// Parses and enumerates a document already in memory.
    pub fn from_value(document: Value, source: impl Into<String>) -> Result<Self, OpenApiError> {
        let version = document
            .get("openapi")
            .map(|v| v.as_str().map(str::to_string).unwrap_or_else(|| v.to_string()))
            .ok_or_else(|| OpenApiError::UnsupportedVersion("missing".into()))?;
        let accepted = Regex::new(r"^3\.[01](\.\d+)?$").expect("valid regex");
        if !accepted.is_match(&version) {
            return Err(OpenApiError::UnsupportedVersion(version));
        }
        let title = document.pointer("/info/title").and_then(Value::as_str).unwrap_or("api").to_string();
        let operations = enumerate_operations(&document)?;
        Ok(Self { document, title, version, operations, source: source.into(), fetched_from: None })
    }

    /// Base URL from the first `servers` entry, resolved against the URL the
    /// document came from when relative.
    pub fn default_base_url(&self, location: &str) -> Result<String, OpenApiError> {
        let declared = self.document.pointer("/servers/0").map(server_url).unwrap_or_default();
        if url::Url::parse(&declared).is_ok_and(|u| matches!(u.scheme(), "http" | "https")) {
            return Ok(declared.trim_end_matches('/').to_string());
        }
        let origin = self.fetched_from.as_deref().unwrap_or(location);
        let base = url::Url::parse(origin)
            .ok()
            .filter(|u| matches!(u.scheme(), "http" | "https"))
            .ok_or_else(|| OpenApiError::NoBaseUrl("document has no absolute server URL and was not fetched over HTTP".into()))?;
        let joined = if declared.is_empty() { base.join("/") } else { base.join(&declared) }
            .map_err(|e| OpenApiError::NoBaseUrl(e.to_string()))?;
        Ok(joined.as_str().trim_end_matches('/').to_string())
    }
}

fn server_url(server: &Value) -> String {
    let mut url = server.get("url").and_then(Value::as_str).unwrap_or_default().to_string();
    if let Some(vars) = server.get("variables").and_then(Value::as_object) {
        for (name, var) in vars {
            if let Some(default) = var.get("default").and_then(Value::as_str) {
                url = url.replace(&format!("{{{name}}}"), default);
            }
        }
    }
    url
}

/// Parses JSON, falling back to YAML.
pub fn parse_document(text: &str) -> Result<Value, OpenApiError> {
    match serde_json::from_str(text) {
        Ok(v) => Ok(v),
        Err(json_err) => serde_yaml::from_str::<Value>(text)
            .map_err(|yaml_err| OpenApiError::Parse(format!("not JSON ({json_err}) nor YAML ({yaml_err})"))),
    }
}

/// Loads a document from a URL, a file path or inline JSON/YAML text. A URL
/// that does not serve a document itself is retried with `/openapi.json`
/// and `/openapi.yaml` appended.
pub fn load_openapi_spec(source: &str) -> Result<OpenApiSpec, OpenApiError> {
    let trimmed = source.trim();
    if trimmed.starts_with("http://") || trimmed.starts_with("https://") {
        let (document, url) = crate::runtime::block_on(fetch_document(trimmed.to_string()))?;
        let mut spec = OpenApiSpec::from_value(document, source)?;
        spec.fetched_from = Some(url);
        return Ok(spec);
    }
    let looks_inline = trimmed.starts_with('{') || trimmed.contains('\n');
    let text = if looks_inline {
        trimmed.to_string()
    } else {
        std::fs::read_to_string(trimmed).map_err(|e| OpenApiError::Fetch(format!("{trimmed}: {e}")))?
    };
    OpenApiSpec::from_value(parse_document(&text)?, source)
}

async fn fetch_document(url: String) -> Result<(Value, String), OpenApiError> {
    let http = reqwest::Client::builder()
        .timeout(std::time::Duration::from_secs(10))
        .build()
        .map_err(|e| OpenApiError::Fetch(e.to_string()))?;
    let base = url.trim_end_matches('/').to_string();
    let mut last_error = String::new();
    for candidate in [url.clone(), format!("{base}/openapi.json"), format!("{base}/openapi.yaml")] {
        let resp = match http.get(&candidate).send().await {
            Ok(r) => r,
            Err(e) => {
                // unreachable hosts will not improve with another path
                return Err(OpenApiError::Fetch(format!("{candidate}: {e}")));
            }
        };
        if !resp.status().is_success() {
            last_error = format!("{candidate}: HTTP {}", resp.status().as_u16());
            continue;
        }
        let text = resp.text().await.map_err(|e| OpenApiError::Fetch(e.to_string()))?;
        match parse_document(&text) {
            Ok(doc) if doc.get("openapi").is_some() || doc.get("swagger").is_some() => return Ok((doc, candidate)),
            _ => last_error = format!("{candidate}: not an OpenAPI document"),
        }
    }
    Err(OpenApiError::Fetch(last_error))
}

fn deref<'a>(node: &'a Value, document: &'a Value, operation: &str) -> Result<&'a Value, OpenApiError> {
    let mut current = node;
    for _ in 0..crate::schema::MAX_REF_DEPTH {
        match current.get("$ref").and_then(Value::as_str) {
            Some(r) => {
                current = resolve_pointer(document, r)
                    .map_err(|source| OpenApiError::Schema { operation: operation.into(), source })?
            }
            None => return Ok(current),
        }
    }
    Err(OpenApiError::Schema {
        operation: operation.into(),
        source: SchemaError::UnresolvableRef {
            reference: node.get("$ref").and_then(Value::as_str).unwrap_or_default().into(),
            reason: format!("reference depth exceeds {}", crate::schema::MAX_REF_DEPTH),
        },
    })
}

/// `{method}_{path}` with runs of non-alphanumerics collapsed to `_`.
pub fn fallback_operation_name(method: HttpMethod, path: &str) -> String {
    let re = Regex::new(r"[^A-Za-z0-9]+").expect("valid regex");
    let sanitized = re.replace_all(path, "_");
    let sanitized = sanitized.trim_matches('_');
    if sanitized.is_empty() {
        method.as_str().to_string()
    } else {
        format!("{}_{sanitized}", method.as_str())
    }
}

fn enumerate_operations(document: &Value) -> Result<Vec<OperationEntry>, OpenApiError> {
    let mut out = Vec::new();
    let Some(paths) = document.get("paths").and_then(Value::as_object) else {
        return Ok(out);
    };
    for (path, item) in paths {
        let item = deref(item, document, path)?;
        let shared_params = item.get("parameters").and_then(Value::as_array).cloned().unwrap_or_default();
        for method in HttpMethod::ALL {
            let Some(op) = item.get(method.as_str()) else { continue };
            out.push(build_operation(document, path, method, op, &shared_params)?);
        }
    }
    Ok(out)
}

fn build_operation(
    document: &Value,
    path: &str,
    method: HttpMethod,
    op: &Value,
    shared_params: &[Value],
) -> Result<OperationEntry, OpenApiError> {
    let tool_name = op
        .get("operationId")
        .and_then(Value::as_str)
        .map(str::to_string)
        .unwrap_or_else(|| fallback_operation_name(method, path));
    let invalid = |reason: String| OpenApiError::InvalidOperation { operation: tool_name.clone(), reason };
    let schema_err = |source: SchemaError| OpenApiError::Schema { operation: tool_name.clone(), source };

    // operation-level parameters override path-level ones with the same (name, in)
    let mut params: Vec<&Value> = Vec::new();
    for raw in shared_params.iter().chain(op.get("parameters").and_then(Value::as_array).into_iter().flatten()) {
        let p = deref(raw, document, &tool_name)?;
        let key = (p.get("name"), p.get("in"));
        params.retain(|q| (q.get("name"), q.get("in")) != key);
        params.push(p);
    }

    let mut properties = Map::new();
    let mut required: Vec<String> = Vec::new();
    let mut bindings: Vec<(String, Location)> = Vec::new();
    let mut bind = |name: &str, location: Location, schema: Value, is_required: bool| {
        if bindings.iter().any(|(n, _)| n == name) {
            return Err(OpenApiError::ParameterCollision { operation: tool_name.clone(), name: name.into() });
        }
        bindings.push((name.to_string(), location));
        properties.insert(name.to_string(), schema);
        if is_required {
            required.push(name.to_string());
        }
        Ok(())
    };

    for p in params {
        let name = p.get("name").and_then(Value::as_str).ok_or_else(|| invalid("parameter without a name".into()))?;
        let location = match p.get("in").and_then(Value::as_str) {
            Some("path") => Location::Path,
            Some("query") => Location::Query,
            Some("header") => Location::Header,
            Some(other) => return Err(invalid(format!("parameter {name:?}: location {other:?} is not supported"))),
            None => return Err(invalid(format!("parameter {name:?} has no location"))),
        };
        let raw_schema = p
            .get("schema")
            .or_else(|| p.get("content").and_then(Value::as_object).and_then(|c| c.values().next()?.get("schema")))
            .cloned()
            .unwrap_or_else(|| json!({}));
        let mut schema = normalize(&raw_schema, document).map_err(schema_err)?;
        if let (Some(d), Some(obj)) = (p.get("description").and_then(Value::as_str), schema.as_object_mut()) {
            obj.entry("description").or_insert_with(|| json!(d));
        }
        let is_required = location == Location::Path || p.get("required").and_then(Value::as_bool).unwrap_or(false);
        bind(name, location, schema, is_required)?;
    }

    let mut content_type = None;
    if let Some(body) = op.get("requestBody") {
        let body = deref(body, document, &tool_name)?;
        if !method.admits_body() {
            return Err(invalid(format!("{} operations cannot take a request body", method.as_str())));
        }
        let content = body.get("content").and_then(Value::as_object).cloned().unwrap_or_default();
        let (media, media_obj) = content
            .iter()
            .find(|(k, _)| k.as_str() == "application/json" || k.ends_with("+json"))
            .ok_or_else(|| invalid("only application/json request bodies are supported".into()))?;
        content_type = Some(media.clone());
        let raw_schema = media_obj.get("schema").cloned().unwrap_or_else(|| json!({}));
        let schema = normalize(&raw_schema, document).map_err(schema_err)?;
        let body_required = body.get("required").and_then(Value::as_bool).unwrap_or(false);
        let fields = schema.get("properties").and_then(Value::as_object).filter(|_| {
            schema.get("type").and_then(Value::as_str) == Some("object") && schema.get("anyOf").is_none()
        });
        match fields {
            Some(fields) => {
                let inner_required: Vec<&str> = schema
                    .get("required")
                    .and_then(Value::as_array)
                    .map(|r| r.iter().filter_map(Value::as_str).collect())
                    .unwrap_or_default();
                for (name, sub) in fields {
                    bind(name, Location::BodyField, sub.clone(), inner_required.contains(&name.as_str()))?;
                }
            }
            None => bind("body", Location::Body, schema, body_required)?,
        }
    }

    let placeholder = Regex::new(r"\{([^}]+)\}").expect("valid regex");
    for cap in placeholder.captures_iter(path) {
        let name = &cap[1];
        if !bindings.iter().any(|(n, l)| n == name && *l == Location::Path) {
            return Err(invalid(format!("path placeholder {{{name}}} has no path parameter")));
        }
    }

    let parameters = JsonSchema::new(json!({"type": "object", "properties": properties, "required": required}))
        .map_err(schema_err)?;
    let description = op
        .get("summary")
        .or_else(|| op.get("description"))
        .and_then(Value::as_str)
        .unwrap_or_default()
        .to_string();
    Ok(OperationEntry {
        http: Arc::new(HttpOperation {
            operation_id: tool_name.clone(),
            method,
            path_template: path.to_string(),
            bindings,
            request_body_content_type: content_type,
        }),
        tool_name,
        description,
        parameters,
    })
}

/// Builds the tools for every operation of `spec` without registering them.
pub fn tools_from_spec(client: &HttpClientConfig, spec: &OpenApiSpec) -> Result<Vec<Tool>, OpenApiError> {
    let http = Arc::new(HttpClient::new(client.clone())?);
    let secrets = client.secrets();
    let mut tools = Vec::with_capacity(spec.operations.len());
    for entry in &spec.operations {
        let (http, op) = (http.clone(), entry.http.clone());
        let invoker = Invoker::from_async(move |args: Value| {
            let (http, op) = (http.clone(), op.clone());
            async move { invoke_http_operation(&http, &op, &args).await }
        });
        let tool = Tool::new(&entry.tool_name, &entry.description, entry.parameters.clone(), invoker, Origin::OpenApi)
            .with_redactions(secrets.clone());
        tools.push(tool);
    }
    Ok(tools)
}

/// Registers one tool per operation. With `Namespace::Default` the
/// namespace is the document title lowercased with spaces replaced by `_`.
pub fn register_from_openapi(
    registry: &mut ToolRegistry,
    client: &HttpClientConfig,
    spec: &OpenApiSpec,
    namespace: &Namespace,
) -> Result<Vec<String>, OpenApiError> {
    let tools = tools_from_spec(client, spec)?;
    let ns = namespace.resolve(&spec.title);
    let replica = Source::OpenApi { spec: spec.source.clone(), client: Some(client.clone()), namespace: namespace.clone() };
    Ok(registry.register_batch(tools, ns.as_deref(), Some(replica))?)
}

/// Operation names and methods, for diagnostics.
pub fn summarize(spec: &OpenApiSpec) -> BTreeMap<String, String> {
    spec.operations
        .iter()
        .map(|o| (o.tool_name.clone(), format!("{} {}", o.http.method.as_str().to_uppercase(), o.http.path_template)))
        .collect()
}
