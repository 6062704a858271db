//! Conversion between provider payloads and [`ToolCall`]s, and from
//! [`ToolCallResult`]s back to conversation messages.

use serde_json::{json, Map, Value};

use crate::model::{ApiFormat, ToolCall, ToolCallResult};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CompatError {
    #[error("unsupported API format {0:?}")]
    UnsupportedFormat(String),
    #[error("malformed payload at {path}: {reason}")]
    MalformedPayload { path: String, reason: String },
}

fn malformed(path: String, reason: impl Into<String>) -> CompatError {
    CompatError::MalformedPayload { path, reason: reason.into() }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Assistant,
    Tool,
}

impl Role {
    pub fn label(self) -> &'static str {
        match self {
            Role::Assistant => "assistant",
            Role::Tool => "tool",
        }
    }
}

/// A message carrying tool calls (assistant) or one tool result (tool).
#[derive(Debug, Clone, PartialEq)]
pub struct ChatMessage {
    pub role: Role,
    pub content: Option<String>,
    pub tool_calls: Vec<ToolCall>,
    pub tool_call_id: Option<String>,
}

impl ChatMessage {
    /// Serializes to the provider shape. Under the Responses format an
    /// assistant message becomes an array of `function_call` items and a tool
    /// message a single `function_call_output` item.
    pub fn to_json(&self, format: ApiFormat) -> Value {
        match (format, self.role) {
            (ApiFormat::ChatCompletion, Role::Assistant) => {
                let calls: Vec<Value> = self
                    .tool_calls
                    .iter()
                    .map(|c| {
                        json!({
                            "id": c.id,
                            "type": "function",
                            "function": {"name": c.name, "arguments": c.arguments},
                        })
                    })
                    .collect();
                json!({"role": "assistant", "content": self.content, "tool_calls": calls})
            }
            (ApiFormat::ChatCompletion, Role::Tool) => json!({
                "role": "tool",
                "tool_call_id": self.tool_call_id,
                "content": self.content,
            }),
            (ApiFormat::Response, Role::Assistant) => Value::Array(
                self.tool_calls
                    .iter()
                    .map(|c| {
                        json!({"type": "function_call", "call_id": c.id, "name": c.name, "arguments": c.arguments})
                    })
                    .collect(),
            ),
            (ApiFormat::Response, Role::Tool) => json!({
                "type": "function_call_output",
                "call_id": self.tool_call_id,
                "output": self.content,
            }),
        }
    }
}

/// Normalizes provider tool calls.
///
/// Chat completions: the `tool_calls` array, or a message object holding it.
/// Responses: an array of output items, or a response object holding
/// `output`; items other than `function_call` are skipped.
pub fn convert_tool_calls(raw: &Value, format: ApiFormat) -> Result<Vec<ToolCall>, CompatError> {
    let (items, base) = match (format, raw) {
        (_, Value::Array(items)) => (items, String::new()),
        (ApiFormat::ChatCompletion, Value::Object(m)) => match m.get("tool_calls") {
            Some(Value::Array(items)) => (items, "/tool_calls".to_string()),
            Some(Value::Null) | None => return Ok(Vec::new()),
            Some(_) => return Err(malformed("/tool_calls".into(), "expected an array")),
        },
        (ApiFormat::Response, Value::Object(m)) => match m.get("output") {
            Some(Value::Array(items)) => (items, "/output".to_string()),
            _ if m.get("type").and_then(Value::as_str) == Some("function_call") => {
                return Ok(vec![response_call(raw, String::new())?]);
            }
            _ => return Err(malformed("/output".into(), "expected an array of output items")),
        },
        _ => return Err(malformed(String::new(), "expected an array or object")),
    };
    let mut calls = Vec::with_capacity(items.len());
    for (i, item) in items.iter().enumerate() {
        let path = format!("{base}/{i}");
        match format {
            ApiFormat::ChatCompletion => calls.push(chat_call(item, path)?),
            ApiFormat::Response => {
                if item.get("type").and_then(Value::as_str) == Some("function_call") {
                    calls.push(response_call(item, path)?);
                } else if !item.is_object() {
                    return Err(malformed(path, "expected an object"));
                }
            }
        }
    }
    Ok(calls)
}

fn text_field(obj: &Map<String, Value>, key: &str, path: &str) -> Result<String, CompatError> {
    match obj.get(key) {
        Some(Value::String(s)) => Ok(s.clone()),
        Some(_) => Err(malformed(format!("{path}/{key}"), "expected a string")),
        None => Err(malformed(format!("{path}/{key}"), "missing")),
    }
}

fn arguments_field(obj: &Map<String, Value>, path: &str) -> Result<String, CompatError> {
    match obj.get("arguments") {
        Some(Value::String(s)) => Ok(s.clone()),
        Some(v @ Value::Object(_)) => Ok(v.to_string()),
        Some(_) => Err(malformed(format!("{path}/arguments"), "expected a JSON string or object")),
        None => Err(malformed(format!("{path}/arguments"), "missing")),
    }
}

fn chat_call(item: &Value, path: String) -> Result<ToolCall, CompatError> {
    let obj = item.as_object().ok_or_else(|| malformed(path.clone(), "expected an object"))?;
    if let Some(kind) = obj.get("type") {
        if kind != "function" {
            return Err(malformed(format!("{path}/type"), "expected \"function\""));
        }
    }
    let fpath = format!("{path}/function");
    let function = obj
        .get("function")
        .and_then(Value::as_object)
        .ok_or_else(|| malformed(fpath.clone(), "expected an object"))?;
    Ok(ToolCall {
        id: text_field(obj, "id", &path)?,
        name: text_field(function, "name", &fpath)?,
        arguments: arguments_field(function, &fpath)?,
    })
}

fn response_call(item: &Value, path: String) -> Result<ToolCall, CompatError> {
    let obj = item.as_object().ok_or_else(|| malformed(path.clone(), "expected an object"))?;
    Ok(ToolCall {
        id: text_field(obj, "call_id", &path)?,
        name: text_field(obj, "name", &path)?,
        arguments: arguments_field(obj, &path)?,
    })
}

/// Rebuilds the assistant message that requested `calls`.
pub fn recover_assistant_message(calls: &[ToolCall], _format: ApiFormat) -> ChatMessage {
    ChatMessage { role: Role::Assistant, content: None, tool_calls: calls.to_vec(), tool_call_id: None }
}

/// One tool message per result, in input order.
pub fn recover_tool_message(results: &[ToolCallResult], _format: ApiFormat) -> Vec<ChatMessage> {
    results
        .iter()
        .map(|r| ChatMessage {
            role: Role::Tool,
            content: Some(result_content(r)),
            tool_calls: Vec::new(),
            tool_call_id: Some(r.id().to_string()),
        })
        .collect()
}

/// Content string for one result: bare strings as-is, other values as
/// canonical JSON, errors as `{"error":...,"category":...}`.
pub fn result_content(result: &ToolCallResult) -> String {
    match (result.value(), result.error_info()) {
        (Some(Value::String(s)), _) => s.clone(),
        (Some(v), _) => canonical_json(v),
        (None, Some(e)) => json!({"error": e.message, "category": e.category.label()}).to_string(),
        (None, None) => unreachable!("a result holds a value or an error"),
    }
}

/// Compact JSON with object keys sorted at every level.
pub fn canonical_json(value: &Value) -> String {
    fn sort(v: &Value) -> Value {
        match v {
            Value::Object(m) => {
                let mut keys: Vec<&String> = m.keys().collect();
                keys.sort();
                Value::Object(keys.into_iter().map(|k| (k.clone(), sort(&m[k]))).collect())
            }
            Value::Array(a) => Value::Array(a.iter().map(sort).collect()),
            other => other.clone(),
        }
    }
    sort(value).to_string()
}

/// Serializes a list of messages, flattening Responses-format assistant items.
pub fn messages_to_json(messages: &[ChatMessage], format: ApiFormat) -> Value {
    let mut out = Vec::new();
    for m in messages {
        match m.to_json(format) {
            Value::Array(items) => out.extend(items),
            v => out.push(v),
        }
    }
    Value::Array(out)
}
