//! Built-in toolsets. All of them are stateless and can be rebuilt by name
//! inside worker processes.

use std::time::Duration;

use serde_json::{json, Value};

use crate::model::{number_value, Invoker, ParamKind, ParamSpec, SignatureDescriptor, ToolError, ToolResult};
use crate::registry::Toolset;

pub const TOOLSETS: [&str; 3] = ["calculator", "timing", "faults"];

/// Longest sleep `timing.sleep` accepts.
pub const MAX_SLEEP_MS: i64 = 60_000;

/// Looks up a hub toolset by key.
pub fn toolset(key: &str) -> Option<Toolset> {
    let mut ts = match key {
        "calculator" => calculator(),
        "timing" => timing(),
        "faults" => faults(),
        _ => return None,
    };
    ts.hub_key = Some(key.to_string());
    Some(ts)
}

fn operands(args: &Value) -> Result<(f64, f64), ToolError> {
    let get = |k: &str| {
        args.get(k)
            .and_then(Value::as_f64)
            .ok_or_else(|| ToolError::raised(format!("argument {k:?} must be a number")))
    };
    Ok((get("a")?, get("b")?))
}

fn finish(x: f64) -> ToolResult {
    number_value(x).ok_or_else(|| ToolError::raised("result is not a finite number"))
}

pub fn add(a: f64, b: f64) -> ToolResult {
    finish(a + b)
}

pub fn subtract(a: f64, b: f64) -> ToolResult {
    finish(a - b)
}

pub fn multiply(a: f64, b: f64) -> ToolResult {
    finish(a * b)
}

pub fn divide(a: f64, b: f64) -> ToolResult {
    if b == 0.0 {
        return Err(ToolError::raised("division by zero"));
    }
    finish(a / b)
}

/// Applies calculator operation `op` by name.
pub fn calculate(op: &str, a: f64, b: f64) -> ToolResult {
    match op {
        "add" => add(a, b),
        "subtract" => subtract(a, b),
        "multiply" => multiply(a, b),
        "divide" => divide(a, b),
        other => Err(ToolError::raised(format!("unknown operation {other:?}"))),
    }
}

fn binary_descriptor(name: &str, description: &str) -> SignatureDescriptor {
    SignatureDescriptor::new(name, description)
        .param(ParamSpec::required("a", ParamKind::Number).describe("first operand"))
        .param(ParamSpec::required("b", ParamKind::Number).describe("second operand"))
        .returns("the result as a number")
}

fn binary_invoker(op: fn(f64, f64) -> ToolResult) -> Invoker {
    Invoker::sync(move |args| {
        let (a, b) = operands(&args)?;
        op(a, b)
    })
}

/// `add`, `subtract`, `multiply`, `divide` over IEEE doubles.
pub fn calculator() -> Toolset {
    Toolset::new("Calculator")
        .member(binary_descriptor("add", "Add two numbers."), binary_invoker(add))
        .member(binary_descriptor("subtract", "Subtract b from a."), binary_invoker(subtract))
        .member(binary_descriptor("multiply", "Multiply two numbers."), binary_invoker(multiply))
        .member(binary_descriptor("divide", "Divide a by b."), binary_invoker(divide))
}

/// `sleep(ms)`: waits and returns `ms`. Used by tests and benchmarks.
pub fn timing() -> Toolset {
    let descriptor = SignatureDescriptor::new("sleep", "Sleep for the given number of milliseconds.")
        .param(ParamSpec::required("ms", ParamKind::Integer).describe("milliseconds, 0 to 60000"))
        .returns("the number of milliseconds slept");
    Toolset::new("Timing").member(
        descriptor,
        Invoker::from_async(|args: Value| async move {
            let ms = args.get("ms").and_then(Value::as_i64).unwrap_or(-1);
            if !(0..=MAX_SLEEP_MS).contains(&ms) {
                return Err(ToolError::raised(format!("ms must be between 0 and {MAX_SLEEP_MS}")));
            }
            if ms > 0 {
                tokio::time::sleep(Duration::from_millis(ms as u64)).await;
            }
            Ok(json!(ms))
        }),
    )
}

/// Fault fixtures: `crash` terminates its host process and is therefore
/// isolated-only; `fail` raises an error of the requested category.
pub fn faults() -> Toolset {
    let crash = SignatureDescriptor::new("crash", "Terminate the worker process running this call.")
        .param(ParamSpec::optional("code", ParamKind::Integer).with_default(json!(86)));
    let fail = SignatureDescriptor::new("fail", "Raise an error.")
        .param(ParamSpec::required("message", ParamKind::String))
        .param(ParamSpec::optional("transient", ParamKind::Boolean).with_default(json!(false)));
    let mut ts = Toolset::new("Faults")
        .member(
            crash,
            Invoker::sync(|args| {
                let code = args.get("code").and_then(Value::as_i64).unwrap_or(86);
                std::process::exit(code as i32)
            }),
        )
        .member(
            fail,
            Invoker::sync(|args| {
                let message = args.get("message").and_then(Value::as_str).unwrap_or("failure").to_string();
                if args.get("transient").and_then(Value::as_bool).unwrap_or(false) {
                    Err(ToolError::raised_transient(message))
                } else {
                    Err(ToolError::raised(message))
                }
            }),
        );
    ts.isolated_only = vec!["crash".to_string()];
    ts
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn arithmetic() {
        assert_eq!(add(2.0, 3.0).unwrap(), json!(5));
        assert_eq!(subtract(5.0, 3.0).unwrap(), json!(2));
        assert_eq!(multiply(1.5, 2.0).unwrap(), json!(3));
        assert_eq!(divide(1.0, 4.0).unwrap(), json!(0.25));
        assert_eq!(divide(1.0, 0.0).unwrap_err().message, "division by zero");
        assert!(multiply(1e308, 1e308).is_err());
    }

    #[test]
    fn toolsets_resolve() {
        for key in TOOLSETS {
            let ts = toolset(key).unwrap();
            assert_eq!(ts.hub_key.as_deref(), Some(key));
        }
        assert!(toolset("web_search").is_none());
        assert_eq!(calculator().members.len(), 4);
    }
}
