//! Schema derivation, argument validation and per-format rendering.
//!
//! Every tool carries one [`JsonSchema`] in a small closed dialect:
//! `type`, `properties`, `required`, `items`, `enum`, `anyOf`, `description`
//! and `default`. Schemas obtained from OpenAPI documents or MCP servers are
//! normalized into it by [`dialect::normalize`].

pub mod dialect;
mod validate;

use std::collections::HashSet;

use serde_json::{json, Map, Value};

use crate::model::{
    conform_name, ApiFormat, NameConstraint, NameError, ParamKind, ParamSpec, SignatureDescriptor, Tool,
};

pub use validate::{validate_value, ValidatedArguments};

/// Maximum `$ref` chain followed before giving up.
pub const MAX_REF_DEPTH: usize = 32;

const DIALECT_KEYWORDS: [&str; 8] =
    ["type", "properties", "required", "items", "enum", "anyOf", "description", "default"];
const DIALECT_TYPES: [&str; 7] = ["object", "string", "integer", "number", "boolean", "array", "null"];

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SchemaError {
    #[error("malformed JSON arguments: {0}")]
    MalformedJson(String),
    #[error("schema violation at {path:?}: {reason}")]
    SchemaViolation { path: String, reason: String },
    #[error("unsupported schema keyword {0:?}")]
    UnsupportedSchemaFeature(String),
    #[error("unresolvable $ref {reference:?}: {reason}")]
    UnresolvableRef { reference: String, reason: String },
    #[error("invalid schema: {0}")]
    InvalidSchema(String),
    #[error("invalid descriptor: {0}")]
    InvalidDescriptor(String),
}

impl SchemaError {
    pub(crate) fn violation(path: &str, reason: impl Into<String>) -> Self {
        SchemaError::SchemaViolation { path: path.to_string(), reason: reason.into() }
    }
}

/// A tool parameter schema satisfying the dialect invariants: the root is an
/// object schema, `required` names appear in `properties`, `anyOf` has at
/// least two branches and `enum` is non-empty.
#[derive(Debug, Clone, PartialEq)]
pub struct JsonSchema(Value);

impl JsonSchema {
    pub fn new(value: Value) -> Result<Self, SchemaError> {
        check_node(&value, "")?;
        if value.get("type").and_then(Value::as_str) != Some("object") {
            return Err(SchemaError::InvalidSchema("root schema must have type \"object\"".into()));
        }
        Ok(Self(value))
    }

    /// `{"type":"object","properties":{},"required":[]}`
    pub fn empty_object() -> Self {
        Self(json!({"type": "object", "properties": {}, "required": []}))
    }

    pub fn as_value(&self) -> &Value {
        &self.0
    }

    pub fn into_value(self) -> Value {
        self.0
    }

    /// Property names in declaration order.
    pub fn property_names(&self) -> Vec<String> {
        self.0
            .get("properties")
            .and_then(Value::as_object)
            .map(|p| p.keys().cloned().collect())
            .unwrap_or_default()
    }
}

fn check_node(node: &Value, path: &str) -> Result<(), SchemaError> {
    let obj = node
        .as_object()
        .ok_or_else(|| SchemaError::InvalidSchema(format!("{path}: schema must be an object")))?;
    for key in obj.keys() {
        if !DIALECT_KEYWORDS.contains(&key.as_str()) {
            return Err(SchemaError::UnsupportedSchemaFeature(key.clone()));
        }
    }
    if let Some(t) = obj.get("type") {
        match t.as_str() {
            Some(t) if DIALECT_TYPES.contains(&t) => {}
            _ => return Err(SchemaError::InvalidSchema(format!("{path}: bad type {t}"))),
        }
    }
    if let Some(props) = obj.get("properties") {
        let props = props
            .as_object()
            .ok_or_else(|| SchemaError::InvalidSchema(format!("{path}: properties must be an object")))?;
        for (name, sub) in props {
            check_node(sub, &format!("{path}/properties/{name}"))?;
        }
    }
    if let Some(req) = obj.get("required") {
        let req = req
            .as_array()
            .ok_or_else(|| SchemaError::InvalidSchema(format!("{path}: required must be an array")))?;
        let props = obj.get("properties").and_then(Value::as_object);
        for r in req {
            let name = r
                .as_str()
                .ok_or_else(|| SchemaError::InvalidSchema(format!("{path}: required entries must be strings")))?;
            if !props.is_some_and(|p| p.contains_key(name)) {
                return Err(SchemaError::InvalidSchema(format!(
                    "{path}: required name {name:?} missing from properties"
                )));
            }
        }
    }
    if let Some(items) = obj.get("items") {
        check_node(items, &format!("{path}/items"))?;
    }
    if let Some(e) = obj.get("enum") {
        match e.as_array() {
            Some(values) if !values.is_empty() => {}
            _ => return Err(SchemaError::InvalidSchema(format!("{path}: enum must be a non-empty array"))),
        }
    }
    if let Some(any) = obj.get("anyOf") {
        match any.as_array() {
            Some(branches) if branches.len() >= 2 => {
                for (i, b) in branches.iter().enumerate() {
                    check_node(b, &format!("{path}/anyOf/{i}"))?;
                }
            }
            _ => return Err(SchemaError::InvalidSchema(format!("{path}: anyOf needs at least two branches"))),
        }
    }
    if let Some(d) = obj.get("description") {
        if !d.is_string() {
            return Err(SchemaError::InvalidSchema(format!("{path}: description must be a string")));
        }
    }
    Ok(())
}

fn is_identifier(name: &str) -> bool {
    let mut chars = name.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

/// Checks the descriptor invariants: identifier-shaped unique names, no
/// default on required params, well-formed enum/union kinds and defaults that
/// conform to their kind.
pub fn check_descriptor(d: &SignatureDescriptor) -> Result<(), SchemaError> {
    if d.tool_name.is_empty() {
        return Err(SchemaError::InvalidDescriptor("tool name must not be empty".into()));
    }
    check_params(&d.params, "")
}

fn check_params(params: &[ParamSpec], path: &str) -> Result<(), SchemaError> {
    let mut seen = HashSet::new();
    for p in params {
        let here = format!("{path}/{}", p.name);
        if !is_identifier(&p.name) {
            return Err(SchemaError::InvalidDescriptor(format!("{here}: not an identifier")));
        }
        if !seen.insert(p.name.as_str()) {
            return Err(SchemaError::InvalidDescriptor(format!("{here}: duplicate parameter")));
        }
        if p.required && p.default.is_some() {
            return Err(SchemaError::InvalidDescriptor(format!("{here}: required parameter has a default")));
        }
        check_kind(&p.kind, &here)?;
        if let Some(default) = &p.default {
            let schema = kind_schema(&p.kind);
            validate_value(&schema, default, &here).map_err(|e| {
                SchemaError::InvalidDescriptor(format!("{here}: default does not conform to its kind ({e})"))
            })?;
        }
    }
    Ok(())
}

fn check_kind(kind: &ParamKind, path: &str) -> Result<(), SchemaError> {
    match kind {
        ParamKind::Array(inner) => check_kind(inner, path),
        ParamKind::Object(fields) => check_params(fields, path),
        ParamKind::Enum(values) if values.is_empty() => {
            Err(SchemaError::InvalidDescriptor(format!("{path}: enum must list at least one value")))
        }
        ParamKind::Union(members) if members.len() < 2 => {
            Err(SchemaError::InvalidDescriptor(format!("{path}: union needs at least two members")))
        }
        ParamKind::Union(members) => members.iter().try_for_each(|m| check_kind(m, path)),
        _ => Ok(()),
    }
}

/// Derives the parameter schema for a descriptor. The mapping is total and
/// deterministic; the descriptor is assumed to have passed [`check_descriptor`].
pub fn derive_schema(d: &SignatureDescriptor) -> JsonSchema {
    JsonSchema(object_schema(&d.params))
}

fn object_schema(params: &[ParamSpec]) -> Value {
    let mut properties = Map::new();
    let mut required = Vec::new();
    for p in params {
        let mut node = match kind_schema(&p.kind) {
            Value::Object(m) => m,
            _ => unreachable!("kind_schema always yields an object"),
        };
        if let Some(d) = &p.description {
            node.insert("description".into(), Value::String(d.clone()));
        }
        if let Some(v) = &p.default {
            node.insert("default".into(), v.clone());
        }
        properties.insert(p.name.clone(), Value::Object(node));
        if p.required {
            required.push(Value::String(p.name.clone()));
        }
    }
    json!({"type": "object", "properties": properties, "required": required})
}

fn kind_schema(kind: &ParamKind) -> Value {
    match kind {
        ParamKind::String => json!({"type": "string"}),
        ParamKind::Integer => json!({"type": "integer"}),
        ParamKind::Number => json!({"type": "number"}),
        ParamKind::Boolean => json!({"type": "boolean"}),
        ParamKind::Null => json!({"type": "null"}),
        ParamKind::Array(inner) => json!({"type": "array", "items": kind_schema(inner)}),
        ParamKind::Object(fields) => object_schema(fields),
        ParamKind::Enum(values) => match enum_type(values) {
            Some(t) => json!({"type": t, "enum": values}),
            None => json!({"enum": values}),
        },
        ParamKind::Union(members) => {
            json!({"anyOf": members.iter().map(kind_schema).collect::<Vec<_>>()})
        }
    }
}

fn enum_type(values: &[Value]) -> Option<&'static str> {
    let of = |v: &Value| -> Option<&'static str> {
        match v {
            Value::String(_) => Some("string"),
            Value::Bool(_) => Some("boolean"),
            Value::Null => Some("null"),
            Value::Number(n) if n.is_i64() || n.is_u64() => Some("integer"),
            Value::Number(_) => Some("number"),
            _ => None,
        }
    };
    let mut types = values.iter().map(of);
    let first = types.next()??;
    let mut merged = first;
    for t in types {
        let t = t?;
        merged = match (merged, t) {
            (a, b) if a == b => a,
            ("integer", "number") | ("number", "integer") => "number",
            _ => return None,
        };
    }
    Some(merged)
}

/// Parses `raw` and validates it against the tool's parameter schema.
pub fn validate_arguments(tool: &Tool, raw: &str) -> Result<ValidatedArguments, SchemaError> {
    let parsed: Value = if raw.trim().is_empty() {
        Value::Object(Map::new())
    } else {
        serde_json::from_str(raw).map_err(|e| SchemaError::MalformedJson(e.to_string()))?
    };
    ValidatedArguments::check(tool.parameters(), parsed)
}

/// Renders a tool for `format` using the permissive name rule.
pub fn render_schema(tool: &Tool, format: ApiFormat) -> Result<Value, NameError> {
    render_schema_with(tool, format, '.', &NameConstraint::permissive())
}

/// Renders a tool for `format`, re-rendering its name under `constraint`.
/// Keys are emitted in the order type, function/name, description, parameters.
pub fn render_schema_with(
    tool: &Tool,
    format: ApiFormat,
    separator: char,
    constraint: &NameConstraint,
) -> Result<Value, NameError> {
    let name = conform_name(tool.name(), separator, constraint)?;
    let mut function = Map::new();
    function.insert("name".into(), Value::String(name));
    function.insert("description".into(), Value::String(tool.description().to_string()));
    function.insert("parameters".into(), tool.parameters().as_value().clone());
    Ok(match format {
        ApiFormat::ChatCompletion => {
            let mut out = Map::new();
            out.insert("type".into(), Value::String("function".into()));
            out.insert("function".into(), Value::Object(function));
            Value::Object(out)
        }
        ApiFormat::Response => {
            let mut out = Map::new();
            out.insert("type".into(), Value::String("function".into()));
            out.extend(function);
            Value::Object(out)
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Invoker, Origin};

    fn add_descriptor() -> SignatureDescriptor {
        SignatureDescriptor::new("add", "Add two integers")
            .param(ParamSpec::required("a", ParamKind::Integer))
            .param(ParamSpec::required("b", ParamKind::Integer))
    }

    fn add_tool() -> Tool {
        Tool::from_descriptor(&add_descriptor(), Invoker::sync(|_| Ok(Value::Null))).unwrap()
    }

    #[test]
    fn derive_two_integers() {
        let s = derive_schema(&add_descriptor());
        assert_eq!(
            serde_json::to_string(s.as_value()).unwrap(),
            r#"{"type":"object","properties":{"a":{"type":"integer"},"b":{"type":"integer"}},"required":["a","b"]}"#
        );
    }

    #[test]
    fn derive_no_params() {
        let s = derive_schema(&SignatureDescriptor::new("noop", ""));
        assert_eq!(s.as_value(), &json!({"type":"object","properties":{},"required":[]}));
    }

    #[test]
    fn derive_union_with_default() {
        let d = SignatureDescriptor::new("f", "").param(
            ParamSpec::optional("x", ParamKind::Union(vec![ParamKind::String, ParamKind::Integer]))
                .with_default(json!("q")),
        );
        let s = derive_schema(&d);
        assert_eq!(
            s.as_value()["properties"]["x"],
            json!({"anyOf":[{"type":"string"},{"type":"integer"}],"default":"q"})
        );
        assert_eq!(s.as_value()["required"], json!([]));
    }

    #[test]
    fn derive_enum_nested_and_arrays() {
        let d = SignatureDescriptor::new("f", "")
            .param(ParamSpec::required("unit", ParamKind::Enum(vec![json!("c"), json!("f")])).describe("unit"))
            .param(ParamSpec::optional("mixed", ParamKind::Enum(vec![json!(1), json!("a")])))
            .param(ParamSpec::required("xs", ParamKind::Array(Box::new(ParamKind::Number))))
            .param(ParamSpec::optional(
                "opts",
                ParamKind::Object(vec![ParamSpec::optional("deep", ParamKind::Boolean).with_default(json!(true))]),
            ));
        let s = derive_schema(&d);
        let p = &s.as_value()["properties"];
        assert_eq!(p["unit"], json!({"type":"string","enum":["c","f"],"description":"unit"}));
        assert_eq!(p["mixed"], json!({"enum":[1,"a"]}));
        assert_eq!(p["xs"], json!({"type":"array","items":{"type":"number"}}));
        assert_eq!(
            p["opts"],
            json!({"type":"object","properties":{"deep":{"type":"boolean","default":true}},"required":[]})
        );
        assert!(JsonSchema::new(s.into_value()).is_ok());
    }

    #[test]
    fn descriptor_invariants() {
        let dup = add_descriptor().param(ParamSpec::required("a", ParamKind::String));
        assert!(check_descriptor(&dup).is_err());
        let bad_name = SignatureDescriptor::new("f", "").param(ParamSpec::required("1x", ParamKind::String));
        assert!(check_descriptor(&bad_name).is_err());
        let req_default =
            SignatureDescriptor::new("f", "").param(ParamSpec::required("x", ParamKind::String).with_default(json!("d")));
        assert!(check_descriptor(&req_default).is_err());
        let bad_default =
            SignatureDescriptor::new("f", "").param(ParamSpec::optional("x", ParamKind::Integer).with_default(json!("d")));
        assert!(check_descriptor(&bad_default).is_err());
        let empty_enum = SignatureDescriptor::new("f", "").param(ParamSpec::required("x", ParamKind::Enum(vec![])));
        assert!(check_descriptor(&empty_enum).is_err());
        let short_union =
            SignatureDescriptor::new("f", "").param(ParamSpec::required("x", ParamKind::Union(vec![ParamKind::Null])));
        assert!(check_descriptor(&short_union).is_err());
        assert!(check_descriptor(&add_descriptor()).is_ok());
    }

    #[test]
    fn json_schema_invariants_enforced() {
        assert!(JsonSchema::new(json!({"type":"string"})).is_err());
        assert!(JsonSchema::new(json!({"type":"object","properties":{},"required":["x"]})).is_err());
        assert!(JsonSchema::new(json!({"type":"object","properties":{"x":{"anyOf":[{"type":"string"}]}}})).is_err());
        assert!(JsonSchema::new(json!({"type":"object","properties":{"x":{"enum":[]}}})).is_err());
        assert_eq!(
            JsonSchema::new(json!({"type":"object","patternProperties":{}})),
            Err(SchemaError::UnsupportedSchemaFeature("patternProperties".into()))
        );
    }

    #[test]
    fn validate_examples() {
        let t = add_tool();
        assert_eq!(validate_arguments(&t, r#"{"a":1,"b":2}"#).unwrap().as_value(), &json!({"a":1,"b":2}));
        assert_eq!(validate_arguments(&t, r#"{"a":1}"#), Err(SchemaError::violation("/b", "required")));
        assert_eq!(validate_arguments(&t, r#"{"a":1,"b":2,"c":3}"#), Err(SchemaError::violation("/c", "unknown key")));
        assert!(matches!(validate_arguments(&t, "{nope"), Err(SchemaError::MalformedJson(_))));
        assert!(matches!(validate_arguments(&t, "[1]"), Err(SchemaError::SchemaViolation { .. })));
    }

    #[test]
    fn render_formats() {
        let t = add_tool();
        let chat = render_schema(&t, ApiFormat::ChatCompletion).unwrap();
        let keys: Vec<_> = chat.as_object().unwrap().keys().cloned().collect();
        assert_eq!(keys, ["type", "function"]);
        let fkeys: Vec<_> = chat["function"].as_object().unwrap().keys().cloned().collect();
        assert_eq!(fkeys, ["name", "description", "parameters"]);

        let resp = render_schema(&t, ApiFormat::Response).unwrap();
        let keys: Vec<_> = resp.as_object().unwrap().keys().cloned().collect();
        assert_eq!(keys, ["type", "name", "description", "parameters"]);

        let bare = Tool::new("x", "", JsonSchema::empty_object(), Invoker::sync(|_| Ok(Value::Null)), Origin::Native);
        assert_eq!(render_schema(&bare, ApiFormat::Response).unwrap()["description"], json!(""));
    }

    #[test]
    fn render_under_strict_pattern() {
        let t = add_tool().with_name("calculator.add");
        let v = render_schema_with(&t, ApiFormat::ChatCompletion, '.', &NameConstraint::openai_strict()).unwrap();
        assert_eq!(v["function"]["name"], "calculator_add");
    }
}
