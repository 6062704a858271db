//! Translation of externally authored JSON Schema (OpenAPI components, MCP
//! `inputSchema`) into the internal dialect.
//!
//! `oneOf` becomes `anyOf`, `nullable` and type arrays become `anyOf` with a
//! `null` branch, `const` becomes a one-element `enum`, object-only `allOf`
//! is merged, internal `$ref`s are inlined, and annotation keywords are
//! dropped. Anything else is rejected with `UnsupportedSchemaFeature`.

use serde_json::{json, Map, Value};

use super::{JsonSchema, SchemaError, DIALECT_TYPES, MAX_REF_DEPTH};

const DROPPED: [&str; 30] = [
    "title",
    "format",
    "examples",
    "example",
    "deprecated",
    "readOnly",
    "writeOnly",
    "$schema",
    "$id",
    "$comment",
    "$anchor",
    "$defs",
    "definitions",
    "discriminator",
    "xml",
    "externalDocs",
    "contentMediaType",
    "contentEncoding",
    "minimum",
    "maximum",
    "exclusiveMinimum",
    "exclusiveMaximum",
    "multipleOf",
    "minLength",
    "maxLength",
    "pattern",
    "minItems",
    "maxItems",
    "uniqueItems",
    "minProperties",
];

fn dropped(key: &str) -> bool {
    DROPPED.contains(&key) || key == "maxProperties" || key.starts_with("x-")
}

/// Normalizes a tool-level schema whose root must describe an object.
/// `$ref`s are resolved against `document`.
pub fn normalize_root(schema: &Value, document: &Value) -> Result<JsonSchema, SchemaError> {
    let mut node = normalize(schema, document)?;
    let obj = node
        .as_object_mut()
        .ok_or_else(|| SchemaError::InvalidSchema("root schema must be an object".into()))?;
    match obj.get("type").and_then(Value::as_str) {
        Some("object") => {}
        None if !obj.contains_key("anyOf") && !obj.contains_key("enum") => {
            obj.insert("type".into(), json!("object"));
        }
        _ => return Err(SchemaError::InvalidSchema("root schema must have type \"object\"".into())),
    }
    obj.entry("properties").or_insert_with(|| json!({}));
    obj.entry("required").or_insert_with(|| json!([]));
    // keep the canonical key order type, properties, required, ...
    let mut ordered = Map::new();
    for key in ["type", "properties", "required"] {
        if let Some(v) = obj.remove(key) {
            ordered.insert(key.into(), v);
        }
    }
    ordered.extend(std::mem::take(obj));
    JsonSchema::new(Value::Object(ordered))
}

/// Normalizes any schema node, resolving internal `$ref`s against `document`.
pub fn normalize(schema: &Value, document: &Value) -> Result<Value, SchemaError> {
    normalize_at(schema, document, 0)
}

/// Follows a local `#/...` JSON pointer.
pub fn resolve_pointer<'a>(document: &'a Value, reference: &str) -> Result<&'a Value, SchemaError> {
    let Some(pointer) = reference.strip_prefix('#') else {
        return Err(SchemaError::UnresolvableRef {
            reference: reference.into(),
            reason: "external references are not fetched".into(),
        });
    };
    document.pointer(pointer).ok_or_else(|| SchemaError::UnresolvableRef {
        reference: reference.into(),
        reason: "target does not exist".into(),
    })
}

fn normalize_at(schema: &Value, document: &Value, depth: usize) -> Result<Value, SchemaError> {
    let obj = match schema {
        Value::Bool(true) => return Ok(json!({})),
        Value::Bool(false) => return Err(SchemaError::UnsupportedSchemaFeature("false".into())),
        Value::Object(o) => o,
        other => return Err(SchemaError::InvalidSchema(format!("schema must be an object, got {other}"))),
    };

    if let Some(reference) = obj.get("$ref") {
        let reference = reference
            .as_str()
            .ok_or_else(|| SchemaError::InvalidSchema("$ref must be a string".into()))?;
        if depth >= MAX_REF_DEPTH {
            return Err(SchemaError::UnresolvableRef {
                reference: reference.into(),
                reason: format!("reference depth exceeds {MAX_REF_DEPTH}"),
            });
        }
        let target = resolve_pointer(document, reference)?;
        let mut resolved = normalize_at(target, document, depth + 1)?;
        if let Some(out) = resolved.as_object_mut() {
            for key in ["description", "default"] {
                if let Some(v) = obj.get(key) {
                    out.insert(key.into(), v.clone());
                }
            }
        }
        return Ok(resolved);
    }

    let mut out = Map::new();
    let mut type_list: Option<Vec<String>> = None;
    let mut nullable = false;
    let mut branches: Option<Vec<Value>> = None;

    for (key, value) in obj {
        match key.as_str() {
            "type" => match value {
                Value::String(t) if DIALECT_TYPES.contains(&t.as_str()) => {
                    out.insert("type".into(), value.clone());
                }
                Value::Array(ts) => {
                    let mut names = Vec::new();
                    for t in ts {
                        match t.as_str() {
                            Some(t) if DIALECT_TYPES.contains(&t) => names.push(t.to_string()),
                            _ => return Err(SchemaError::InvalidSchema(format!("bad type entry {t}"))),
                        }
                    }
                    type_list = Some(names);
                }
                other => return Err(SchemaError::InvalidSchema(format!("bad type {other}"))),
            },
            "properties" => {
                let props = value
                    .as_object()
                    .ok_or_else(|| SchemaError::InvalidSchema("properties must be an object".into()))?;
                let mut norm = Map::new();
                for (name, sub) in props {
                    norm.insert(name.clone(), normalize_at(sub, document, depth)?);
                }
                out.insert("properties".into(), Value::Object(norm));
            }
            "required" => {
                if !value.as_array().is_some_and(|r| r.iter().all(Value::is_string)) {
                    return Err(SchemaError::InvalidSchema("required must be an array of strings".into()));
                }
                out.insert("required".into(), value.clone());
            }
            "items" => match value {
                Value::Array(_) => return Err(SchemaError::UnsupportedSchemaFeature("items".into())),
                _ => {
                    out.insert("items".into(), normalize_at(value, document, depth)?);
                }
            },
            "enum" => match value.as_array() {
                Some(v) if !v.is_empty() => {
                    out.insert("enum".into(), value.clone());
                }
                _ => return Err(SchemaError::InvalidSchema("enum must be a non-empty array".into())),
            },
            "const" => {
                out.insert("enum".into(), json!([value]));
            }
            "anyOf" | "oneOf" => {
                if branches.is_some() {
                    return Err(SchemaError::UnsupportedSchemaFeature(key.clone()));
                }
                let list = value
                    .as_array()
                    .ok_or_else(|| SchemaError::InvalidSchema(format!("{key} must be an array")))?;
                branches = Some(
                    list.iter()
                        .map(|b| normalize_at(b, document, depth))
                        .collect::<Result<_, _>>()?,
                );
            }
            "allOf" => {
                let list = value
                    .as_array()
                    .ok_or_else(|| SchemaError::InvalidSchema("allOf must be an array".into()))?;
                let parts: Vec<Value> =
                    list.iter().map(|b| normalize_at(b, document, depth)).collect::<Result<_, _>>()?;
                merge_all_of(&mut out, parts)?;
            }
            "description" => {
                if let Value::String(_) = value {
                    out.insert("description".into(), value.clone());
                }
            }
            "default" => {
                out.insert("default".into(), value.clone());
            }
            "nullable" => nullable = value.as_bool().unwrap_or(false),
            "additionalProperties" => match value {
                Value::Bool(_) => {}
                Value::Object(o) if o.is_empty() => {}
                _ => return Err(SchemaError::UnsupportedSchemaFeature(key.clone())),
            },
            k if dropped(k) => {}
            other => return Err(SchemaError::UnsupportedSchemaFeature(other.to_string())),
        }
    }

    // required names must exist as properties
    if let Some(required) = out.get("required").and_then(Value::as_array).cloned() {
        let props = out.entry("properties").or_insert_with(|| json!({}));
        if let Some(props) = props.as_object_mut() {
            for name in required.iter().filter_map(Value::as_str) {
                props.entry(name.to_string()).or_insert_with(|| json!({}));
            }
        }
    }
    if out.contains_key("properties") && !out.contains_key("type") && type_list.is_none() {
        out.insert("type".into(), json!("object"));
    }

    if let Some(types) = type_list {
        split_type_list(&mut out, types);
    }

    if let Some(list) = branches {
        match list.len() {
            0 => return Err(SchemaError::InvalidSchema("anyOf/oneOf must not be empty".into())),
            1 => {
                let only = list.into_iter().next().unwrap_or_default();
                if let Value::Object(b) = only {
                    for (k, v) in b {
                        out.entry(k).or_insert(v);
                    }
                }
            }
            _ => {
                let existing = out.remove("anyOf");
                let mut all = match existing {
                    Some(Value::Array(a)) => a,
                    _ => Vec::new(),
                };
                all.extend(list);
                out.insert("anyOf".into(), Value::Array(all));
            }
        }
    }

    if nullable {
        make_nullable(&mut out);
    }
    Ok(order_keys(out))
}

fn split_type_list(out: &mut Map<String, Value>, types: Vec<String>) {
    match types.len() {
        0 => {}
        1 => {
            out.insert("type".into(), Value::String(types[0].clone()));
        }
        _ if out.contains_key("enum") => {
            // enum already pins the admissible values
        }
        _ => {
            let props = out.remove("properties");
            let required = out.remove("required");
            let items = out.remove("items");
            let branches: Vec<Value> = types
                .iter()
                .map(|t| {
                    let mut b = Map::new();
                    b.insert("type".into(), Value::String(t.clone()));
                    if t == "object" {
                        if let Some(p) = &props {
                            b.insert("properties".into(), p.clone());
                        }
                        if let Some(r) = &required {
                            b.insert("required".into(), r.clone());
                        }
                    }
                    if t == "array" {
                        if let Some(i) = &items {
                            b.insert("items".into(), i.clone());
                        }
                    }
                    Value::Object(b)
                })
                .collect();
            out.insert("anyOf".into(), Value::Array(branches));
        }
    }
}

fn make_nullable(out: &mut Map<String, Value>) {
    if out.get("type").and_then(Value::as_str) == Some("null") {
        return;
    }
    if let Some(Value::Array(branches)) = out.get_mut("anyOf") {
        if !branches.iter().any(|b| b.get("type").and_then(Value::as_str) == Some("null")) {
            branches.push(json!({"type": "null"}));
        }
        return;
    }
    if let Some(Value::Array(values)) = out.get_mut("enum") {
        if !values.contains(&Value::Null) {
            values.push(Value::Null);
        }
        out.remove("type");
        return;
    }
    let description = out.remove("description");
    let default = out.remove("default");
    let inner = std::mem::take(out);
    out.insert("anyOf".into(), json!([Value::Object(inner), {"type": "null"}]));
    if let Some(d) = description {
        out.insert("description".into(), d);
    }
    if let Some(d) = default {
        out.insert("default".into(), d);
    }
}

fn merge_all_of(out: &mut Map<String, Value>, parts: Vec<Value>) -> Result<(), SchemaError> {
    for part in parts {
        let Value::Object(p) = part else {
            return Err(SchemaError::UnsupportedSchemaFeature("allOf".into()));
        };
        let is_object = p.get("type").and_then(Value::as_str).map_or(p.contains_key("properties"), |t| t == "object");
        if !is_object || p.contains_key("anyOf") {
            return Err(SchemaError::UnsupportedSchemaFeature("allOf".into()));
        }
        out.insert("type".into(), json!("object"));
        for (k, v) in p {
            match k.as_str() {
                "properties" => {
                    let dst = out.entry("properties").or_insert_with(|| json!({}));
                    if let (Some(dst), Value::Object(src)) = (dst.as_object_mut(), v) {
                        for (name, schema) in src {
                            dst.insert(name, schema);
                        }
                    }
                }
                "required" => {
                    let dst = out.entry("required").or_insert_with(|| json!([]));
                    if let (Some(dst), Value::Array(src)) = (dst.as_array_mut(), v) {
                        for name in src {
                            if !dst.contains(&name) {
                                dst.push(name);
                            }
                        }
                    }
                }
                "type" => {}
                _ => {
                    out.entry(k).or_insert(v);
                }
            }
        }
    }
    Ok(())
}

fn order_keys(mut m: Map<String, Value>) -> Value {
    const ORDER: [&str; 8] = ["type", "enum", "items", "properties", "required", "anyOf", "description", "default"];
    let mut out = Map::new();
    for k in ORDER {
        if let Some(v) = m.remove(k) {
            out.insert(k.into(), v);
        }
    }
    out.extend(m);
    Value::Object(out)
}
