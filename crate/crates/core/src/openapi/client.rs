use std::collections::BTreeMap;
use std::time::Duration;

use percent_encoding::{utf8_percent_encode, AsciiSet, NON_ALPHANUMERIC};
use reqwest::header::{HeaderMap, HeaderName, HeaderValue, RETRY_AFTER};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use tokio::sync::Semaphore;

use super::{HttpMethod, HttpOperation, Location, OpenApiError};
use crate::model::{ToolError, ToolErrorKind};

/// Characters left alone in path segments (RFC 3986 unreserved).
const PATH_SEGMENT: &AsciiSet = &NON_ALPHANUMERIC.remove(b'-').remove(b'.').remove(b'_').remove(b'~');

/// Concurrent requests allowed per client.
pub const MAX_CONNECTIONS: usize = 64;

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Auth {
    #[default]
    None,
    Bearer {
        token: String,
    },
    Basic {
        username: String,
        password: String,
    },
}

fn default_timeout() -> f64 {
    10.0
}

fn default_true() -> bool {
    true
}

fn is_default_timeout(t: &f64) -> bool {
    *t == default_timeout()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HttpClientConfig {
    pub base_url: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub headers: BTreeMap<String, String>,
    #[serde(default)]
    pub auth: Auth,
    #[serde(default = "default_timeout", skip_serializing_if = "is_default_timeout")]
    pub timeout_secs: f64,
    #[serde(default = "default_true")]
    pub verify_tls: bool,
}

impl HttpClientConfig {
    pub fn new(base_url: &str) -> Result<Self, OpenApiError> {
        let config = Self {
            base_url: base_url.trim_end_matches('/').to_string(),
            headers: BTreeMap::new(),
            auth: Auth::None,
            timeout_secs: default_timeout(),
            verify_tls: true,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn with_auth(mut self, auth: Auth) -> Self {
        self.auth = auth;
        self
    }

    pub fn with_header(mut self, name: impl Into<String>, value: impl Into<String>) -> Self {
        self.headers.insert(name.into(), value.into());
        self
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout_secs = timeout.as_secs_f64();
        self
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_secs_f64(self.timeout_secs)
    }

    pub fn validate(&self) -> Result<(), OpenApiError> {
        let invalid = |m: &str| Err(OpenApiError::InvalidConfig(m.into()));
        match url::Url::parse(&self.base_url) {
            Ok(u) if matches!(u.scheme(), "http" | "https") && u.has_host() => {}
            _ => return invalid("base_url must be an absolute http or https URL"),
        }
        match &self.auth {
            Auth::Bearer { token } if token.is_empty() => return invalid("bearer token must not be empty"),
            Auth::Basic { username, .. } if username.is_empty() => return invalid("basic auth username must not be empty"),
            _ => {}
        }
        if !(self.timeout_secs.is_finite() && self.timeout_secs > 0.0) {
            return invalid("timeout must be positive");
        }
        Ok(())
    }

    /// Credentials to mask in error messages.
    pub fn secrets(&self) -> Vec<String> {
        match &self.auth {
            Auth::None => Vec::new(),
            Auth::Bearer { token } => vec![token.clone()],
            Auth::Basic { password, .. } => vec![password.clone()],
        }
    }
}

/// A validated config plus its connection pool. Cheap to share.
pub struct HttpClient {
    config: HttpClientConfig,
    inner: reqwest::Client,
    slots: Semaphore,
}

impl std::fmt::Debug for HttpClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HttpClient").field("base_url", &self.config.base_url).finish()
    }
}

impl HttpClient {
    pub fn new(config: HttpClientConfig) -> Result<Self, OpenApiError> {
        config.validate()?;
        let mut headers = HeaderMap::new();
        for (k, v) in &config.headers {
            let name = HeaderName::from_bytes(k.as_bytes()).map_err(|e| OpenApiError::InvalidConfig(e.to_string()))?;
            let value = HeaderValue::from_str(v).map_err(|e| OpenApiError::InvalidConfig(e.to_string()))?;
            headers.insert(name, value);
        }
        let inner = reqwest::Client::builder()
            .default_headers(headers)
            .timeout(config.timeout())
            .pool_max_idle_per_host(MAX_CONNECTIONS)
            .tls_danger_accept_invalid_certs(!config.verify_tls)
            .build()
            .map_err(|e| OpenApiError::InvalidConfig(e.to_string()))?;
        Ok(Self { config, inner, slots: Semaphore::new(MAX_CONNECTIONS) })
    }

    pub fn config(&self) -> &HttpClientConfig {
        &self.config
    }
}

fn scalar_text(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

fn transport_error(e: reqwest::Error, timeout: Duration) -> ToolError {
    if e.is_timeout() {
        ToolError::timeout(timeout)
    } else {
        ToolError::new(ToolErrorKind::ConnectionFailed, format!("connection failed: {e}"))
    }
}

/// Performs one operation with validated arguments.
pub async fn invoke_http_operation(client: &HttpClient, op: &HttpOperation, args: &Value) -> Result<Value, ToolError> {
    let empty = Map::new();
    let args = args.as_object().unwrap_or(&empty);
    let mut path = op.path_template.clone();
    let mut query: Vec<(String, String)> = Vec::new();
    let mut headers = HeaderMap::new();
    let mut body_fields = Map::new();
    let mut body: Option<Value> = None;

    for (name, location) in &op.bindings {
        let Some(value) = args.get(name) else { continue };
        match location {
            Location::Path => {
                let encoded = utf8_percent_encode(&scalar_text(value), PATH_SEGMENT).to_string();
                path = path.replace(&format!("{{{name}}}"), &encoded);
            }
            Location::Query => match value {
                Value::Array(items) => query.extend(items.iter().map(|i| (name.clone(), scalar_text(i)))),
                Value::Null => {}
                v => query.push((name.clone(), scalar_text(v))),
            },
            Location::Header => {
                let header = HeaderName::from_bytes(name.as_bytes())
                    .map_err(|e| ToolError::raised(format!("invalid header name {name:?}: {e}")))?;
                let value = HeaderValue::from_str(&scalar_text(value))
                    .map_err(|e| ToolError::raised(format!("invalid value for header {name:?}: {e}")))?;
                headers.insert(header, value);
            }
            Location::BodyField => {
                body_fields.insert(name.clone(), value.clone());
            }
            Location::Body => body = Some(value.clone()),
        }
    }
    if body.is_none() && (!body_fields.is_empty() || op.request_body_content_type.is_some()) {
        body = Some(Value::Object(body_fields));
    }

    let url = format!("{}{}", client.config.base_url, path);
    let method = match op.method {
        HttpMethod::Get => reqwest::Method::GET,
        HttpMethod::Post => reqwest::Method::POST,
        HttpMethod::Put => reqwest::Method::PUT,
        HttpMethod::Patch => reqwest::Method::PATCH,
        HttpMethod::Delete => reqwest::Method::DELETE,
    };
    let mut request = client.inner.request(method, &url).headers(headers);
    if !query.is_empty() {
        request = request.query(&query);
    }
    request = match &client.config.auth {
        Auth::None => request,
        Auth::Bearer { token } => request.bearer_auth(token),
        Auth::Basic { username, password } => request.basic_auth(username, Some(password)),
    };
    if let (Some(body), true) = (body, op.method.admits_body()) {
        let content_type = op.request_body_content_type.as_deref().unwrap_or("application/json");
        request = request
            .header(reqwest::header::CONTENT_TYPE, content_type)
            .body(serde_json::to_vec(&body).expect("JSON values serialize"));
    }

    let timeout = client.config.timeout();
    let _permit = client.slots.acquire().await.expect("semaphore never closed");
    let response = request.send().await.map_err(|e| transport_error(e, timeout))?;
    let status = response.status();
    let retry_after = response
        .headers()
        .get(RETRY_AFTER)
        .and_then(|v| v.to_str().ok())
        .and_then(|s| s.trim().parse::<f64>().ok())
        .filter(|s| s.is_finite() && *s >= 0.0)
        .map(Duration::from_secs_f64);
    let text = response.text().await.map_err(|e| transport_error(e, timeout))?;
    if status.is_success() {
        if text.trim().is_empty() {
            return Ok(Value::Null);
        }
        return Ok(serde_json::from_str(&text).unwrap_or(Value::String(text)));
    }
    let snippet: String = text.chars().take(500).collect();
    let mut e = ToolError::new(
        ToolErrorKind::HttpStatus(status.as_u16()),
        if snippet.is_empty() { format!("HTTP {}", status.as_u16()) } else { format!("HTTP {}: {snippet}", status.as_u16()) },
    );
    e.retry_after = retry_after;
    Err(e)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn config_validation() {
        assert!(HttpClientConfig::new("ftp://x").is_err());
        assert!(HttpClientConfig::new("localhost:8000").is_err());
        let c = HttpClientConfig::new("http://localhost:8000/").unwrap();
        assert_eq!(c.base_url, "http://localhost:8000");
        assert!(c.clone().with_auth(Auth::Bearer { token: String::new() }).validate().is_err());
        let c = c.with_auth(Auth::Bearer { token: "s3cret".into() });
        assert_eq!(c.secrets(), vec!["s3cret".to_string()]);
    }

    #[test]
    fn config_serde() {
        let c: HttpClientConfig = serde_json::from_value(json!({
            "base_url": "https://api.example.com",
            "auth": {"type": "basic", "username": "u", "password": "p"},
            "timeout_secs": 2.5
        }))
        .unwrap();
        assert!(c.verify_tls);
        assert_eq!(c.timeout(), Duration::from_millis(2500));
        let back: HttpClientConfig = serde_json::from_value(serde_json::to_value(&c).unwrap()).unwrap();
        assert_eq!(back, c);
        let plain = HttpClientConfig::new("http://h").unwrap();
        assert_eq!(serde_json::to_value(&plain).unwrap(), json!({"base_url": "http://h", "auth": {"type": "none"}, "verify_tls": true}));
    }

    #[test]
    fn path_encoding() {
        assert_eq!(utf8_percent_encode("a b/c~d", PATH_SEGMENT).to_string(), "a%20b%2Fc~d");
    }
}
