use serde_json::{Map, Value};

use super::{JsonSchema, SchemaError};

/// Argument object that conformed to a tool schema, with defaults filled in.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidatedArguments(Value);

impl ValidatedArguments {
    pub fn check(schema: &JsonSchema, value: Value) -> Result<Self, SchemaError> {
        if !value.is_object() {
            return Err(SchemaError::violation("", "expected an object"));
        }
        validate_value(schema.as_value(), &value, "").map(Self)
    }

    pub fn as_value(&self) -> &Value {
        &self.0
    }

    pub fn into_value(self) -> Value {
        self.0
    }

    pub fn to_json_string(&self) -> String {
        self.0.to_string()
    }
}

fn escape(token: &str) -> String {
    token.replace('~', "~0").replace('/', "~1")
}

/// Validates `value` against a dialect schema node and returns its canonical
/// form. Object schemas with `properties` are closed; integers are accepted
/// where numbers are expected and nothing else is coerced.
pub fn validate_value(schema: &Value, value: &Value, path: &str) -> Result<Value, SchemaError> {
    let Some(node) = schema.as_object() else {
        return Ok(value.clone());
    };

    if let Some(branches) = node.get("anyOf").and_then(Value::as_array) {
        let mut first_err = None;
        for b in branches {
            match validate_value(b, value, path) {
                Ok(v) => {
                    return check_local(node, v, path);
                }
                Err(e) => {
                    first_err.get_or_insert(e);
                }
            }
        }
        let detail = first_err.map(|e| format!(" ({e})")).unwrap_or_default();
        return Err(SchemaError::violation(path, format!("matches no anyOf branch{detail}")));
    }

    check_local(node, value.clone(), path)
}

// type + enum + structure, for a node whose anyOf (if any) already matched
fn check_local(node: &Map<String, Value>, value: Value, path: &str) -> Result<Value, SchemaError> {
    if let Some(allowed) = node.get("enum").and_then(Value::as_array) {
        if !allowed.iter().any(|a| json_equal(a, &value)) {
            return Err(SchemaError::violation(path, "not one of the enumerated values"));
        }
    }
    let Some(ty) = node.get("type").and_then(Value::as_str) else {
        return Ok(value);
    };
    match ty {
        "object" => {
            let Value::Object(given) = value else {
                return Err(SchemaError::violation(path, "expected object"));
            };
            let Some(props) = node.get("properties").and_then(Value::as_object) else {
                return Ok(Value::Object(given));
            };
            let required: Vec<&str> = node
                .get("required")
                .and_then(Value::as_array)
                .map(|r| r.iter().filter_map(Value::as_str).collect())
                .unwrap_or_default();
            let mut out = Map::new();
            for (name, sub) in props {
                let here = format!("{path}/{}", escape(name));
                match given.get(name) {
                    Some(v) => {
                        out.insert(name.clone(), validate_value(sub, v, &here)?);
                    }
                    None if required.contains(&name.as_str()) => {
                        return Err(SchemaError::violation(&here, "required"));
                    }
                    None => {
                        if let Some(d) = sub.get("default") {
                            out.insert(name.clone(), d.clone());
                        }
                    }
                }
            }
            if let Some(extra) = given.keys().find(|k| !props.contains_key(*k)) {
                return Err(SchemaError::violation(&format!("{path}/{}", escape(extra)), "unknown key"));
            }
            Ok(Value::Object(out))
        }
        "array" => {
            let Value::Array(items) = value else {
                return Err(SchemaError::violation(path, "expected array"));
            };
            match node.get("items") {
                Some(item_schema) => items
                    .iter()
                    .enumerate()
                    .map(|(i, v)| validate_value(item_schema, v, &format!("{path}/{i}")))
                    .collect::<Result<Vec<_>, _>>()
                    .map(Value::Array),
                None => Ok(Value::Array(items)),
            }
        }
        "string" if value.is_string() => Ok(value),
        "boolean" if value.is_boolean() => Ok(value),
        "null" if value.is_null() => Ok(value),
        "number" if value.is_number() => Ok(value),
        "integer" if is_integral(&value) => Ok(value),
        other => Err(SchemaError::violation(path, format!("expected {other}"))),
    }
}

fn is_integral(v: &Value) -> bool {
    match v {
        Value::Number(n) => n.is_i64() || n.is_u64() || n.as_f64().is_some_and(|f| f.is_finite() && f.fract() == 0.0),
        _ => false,
    }
}

/// JSON equality with numbers compared by value, so `1` equals `1.0`.
pub(crate) fn json_equal(a: &Value, b: &Value) -> bool {
    match (a, b) {
        (Value::Number(x), Value::Number(y)) => match (x.as_i64(), y.as_i64()) {
            (Some(i), Some(j)) => i == j,
            _ => match (x.as_u64(), y.as_u64()) {
                (Some(i), Some(j)) => i == j,
                _ => x.as_f64() == y.as_f64(),
            },
        },
        (Value::Array(x), Value::Array(y)) => x.len() == y.len() && x.iter().zip(y).all(|(p, q)| json_equal(p, q)),
        (Value::Object(x), Value::Object(y)) => {
            x.len() == y.len() && x.iter().all(|(k, v)| y.get(k).is_some_and(|w| json_equal(v, w)))
        }
        _ => a == b,
    }
}
