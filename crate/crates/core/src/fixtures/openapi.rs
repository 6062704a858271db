use std::collections::HashMap;
use std::sync::Arc;

use axum::body::Body;
use axum::extract::{Path, Query, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use serde_json::{json, Map, Value};

use super::{start, FailureKind, FixtureConfig, FixtureError, FixtureHandle, Injector};
use crate::hub;

const OPERATIONS: [(&str, &str); 4] = [
    ("add", "Add two numbers."),
    ("subtract", "Subtract b from a."),
    ("multiply", "Multiply two numbers."),
    ("divide", "Divide a by b."),
];

/// The OpenAPI 3.1 document served at `/openapi.json`.
pub fn openapi_document() -> Value {
    let operand = |name: &str, text: &str| {
        json!({"name": name, "in": "query", "required": true, "description": text, "schema": {"type": "number"}})
    };
    let mut paths = Map::new();
    for (op, summary) in OPERATIONS {
        paths.insert(
            format!("/{op}"),
            json!({"get": {
                "operationId": op,
                "summary": summary,
                "parameters": [operand("a", "first operand"), operand("b", "second operand")],
                "responses": {
                    "200": {"description": "the result", "content": {"application/json": {"schema": {"type": "number"}}}},
                    "400": {"description": "invalid input", "content": {"application/json": {"schema": {"$ref": "#/components/schemas/Error"}}}}
                }
            }}),
        );
    }
    json!({
        "openapi": "3.1.0",
        "info": {"title": "Calculator", "version": "1.0.0"},
        "paths": paths,
        "components": {"schemas": {"Error": {
            "type": "object",
            "properties": {"error": {"type": "string"}},
            "required": ["error"]
        }}}
    })
}

fn error(status: StatusCode, message: &str) -> Response {
    (status, Json(json!({"error": message}))).into_response()
}

/// A 200 response whose body fails mid-stream, cutting the connection.
fn dropped() -> Response {
    let body = futures::stream::once(async {
        Err::<axum::body::Bytes, _>(std::io::Error::new(std::io::ErrorKind::ConnectionAborted, "injected drop"))
    });
    Response::builder()
        .status(StatusCode::OK)
        .header("content-type", "application/json")
        .body(Body::from_stream(body))
        .expect("static response parts")
}

async fn arithmetic(
    State(injector): State<Arc<Injector>>,
    Path(op): Path<String>,
    Query(query): Query<HashMap<String, String>>,
) -> Response {
    if !OPERATIONS.iter().any(|(name, _)| *name == op) {
        return error(StatusCode::NOT_FOUND, "no such operation");
    }
    match injector.begin_call().await {
        Some(FailureKind::Http500) => return error(StatusCode::INTERNAL_SERVER_ERROR, "injected failure"),
        Some(FailureKind::DropConnection) => return dropped(),
        Some(FailureKind::RpcError) => return error(StatusCode::UNPROCESSABLE_ENTITY, "injected failure"),
        None => {}
    }
    let operand = |k: &str| query.get(k).and_then(|v| v.parse::<f64>().ok());
    let (Some(a), Some(b)) = (operand("a"), operand("b")) else {
        return error(StatusCode::BAD_REQUEST, "query parameters a and b must be numbers");
    };
    match hub::calculate(&op, a, b) {
        Ok(v) => Json(v).into_response(),
        Err(e) => error(StatusCode::BAD_REQUEST, &e.message),
    }
}

async fn echo_headers(headers: HeaderMap) -> Json<Value> {
    let map: Map<String, Value> = headers
        .iter()
        .map(|(k, v)| (k.as_str().to_string(), json!(v.to_str().unwrap_or_default())))
        .collect();
    Json(Value::Object(map))
}

/// Serves the calculator over plain HTTP: `/openapi.json`, `/{add,subtract,
/// multiply,divide}?a=&b=` and a `/headers` echo.
pub fn serve_openapi_fixture(config: &FixtureConfig) -> Result<FixtureHandle, FixtureError> {
    start(config, "", |injector| {
        Router::new()
            .route("/openapi.json", get(|| async { Json(openapi_document()) }))
            .route("/headers", get(echo_headers))
            .route("/{op}", get(arithmetic))
            .with_state(injector)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::openapi::OpenApiSpec;

    #[test]
    fn document_loads() {
        let spec = OpenApiSpec::from_value(openapi_document(), "fixture").unwrap();
        let names: Vec<_> = spec.operations.iter().map(|o| o.tool_name.as_str()).collect();
        assert_eq!(names, ["add", "subtract", "multiply", "divide"]);
        assert_eq!(spec.title, "Calculator");
    }
}
