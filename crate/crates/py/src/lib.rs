//! Python bindings: a `Registry` class plus helpers for provider payloads
//! and the local calculator fixtures.
//!
//! JSON-shaped values cross the boundary as plain Python objects (dict, list,
//! str, int, float, bool, None). Batch execution releases the GIL.

use std::path::PathBuf;

use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyTypeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyBool, PyDict, PyFloat, PyInt, PyList, PyString, PyTuple};
use serde_json::{Map, Number, Value};

use toolmesh_core::compat::{self, messages_to_json, recover_tool_message};
use toolmesh_core::executor::ExecutorConfig;
use toolmesh_core::fixtures::{self, FixtureConfig, FixtureHandle, McpFixtureTransport};
use toolmesh_core::manifest::{Manifest, Namespace};
use toolmesh_core::mcp::{register_from_mcp, McpEndpoint};
use toolmesh_core::model::{ApiFormat, ExecutionMode, Invoker, Origin, SignatureDescriptor, ToolCall, ToolError};
use toolmesh_core::openapi::{load_openapi_spec, register_from_openapi, Auth, HttpClientConfig};
use toolmesh_core::registry::{ConflictPolicy, ToolRegistry};

create_exception!(toolmesh, ToolmeshError, PyException, "Registry, schema or protocol failure.");

fn err(e: impl std::fmt::Display) -> PyErr {
    ToolmeshError::new_err(e.to_string())
}

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

pub fn to_json(obj: &Bound<'_, PyAny>) -> PyResult<Value> {
    if obj.is_none() {
        return Ok(Value::Null);
    }
    // bool before int: Python bools are ints
    if let Ok(b) = obj.cast::<PyBool>() {
        return Ok(Value::Bool(b.is_true()));
    }
    if obj.is_instance_of::<PyInt>() {
        if let Ok(i) = obj.extract::<i64>() {
            return Ok(Value::from(i));
        }
        if let Ok(u) = obj.extract::<u64>() {
            return Ok(Value::from(u));
        }
        return Err(value_err("integer out of range"));
    }
    if let Ok(f) = obj.cast::<PyFloat>() {
        return Number::from_f64(f.value()).map(Value::Number).ok_or_else(|| value_err("non-finite float"));
    }
    if let Ok(s) = obj.cast::<PyString>() {
        return Ok(Value::String(s.to_str()?.to_owned()));
    }
    if let Ok(d) = obj.cast::<PyDict>() {
        let mut map = Map::new();
        for (k, v) in d.iter() {
            let key = k.cast::<PyString>().map_err(|_| PyTypeError::new_err("dict keys must be str"))?;
            map.insert(key.to_str()?.to_owned(), to_json(&v)?);
        }
        return Ok(Value::Object(map));
    }
    if let Ok(l) = obj.cast::<PyList>() {
        return l.iter().map(|v| to_json(&v)).collect::<PyResult<Vec<_>>>().map(Value::Array);
    }
    if let Ok(t) = obj.cast::<PyTuple>() {
        return t.iter().map(|v| to_json(&v)).collect::<PyResult<Vec<_>>>().map(Value::Array);
    }
    Err(PyTypeError::new_err(format!("cannot convert {} to JSON", obj.get_type().name()?)))
}

pub fn to_py(py: Python<'_>, v: &Value) -> PyResult<Py<PyAny>> {
    Ok(match v {
        Value::Null => py.None(),
        Value::Bool(b) => PyBool::new(py, *b).to_owned().into_any().unbind(),
        Value::Number(n) => match (n.as_i64(), n.as_u64()) {
            (Some(i), _) => i.into_pyobject(py)?.into_any().unbind(),
            (None, Some(u)) => u.into_pyobject(py)?.into_any().unbind(),
            _ => n.as_f64().unwrap_or(f64::NAN).into_pyobject(py)?.into_any().unbind(),
        },
        Value::String(s) => PyString::new(py, s).into_any().unbind(),
        Value::Array(items) => {
            let list = PyList::empty(py);
            for item in items {
                list.append(to_py(py, item)?)?;
            }
            list.into_any().unbind()
        }
        Value::Object(map) => {
            let dict = PyDict::new(py);
            for (k, item) in map {
                dict.set_item(k, to_py(py, item)?)?;
            }
            dict.into_any().unbind()
        }
    })
}

fn namespace(obj: Option<&Bound<'_, PyAny>>) -> PyResult<Namespace> {
    match obj {
        None => Ok(Namespace::None),
        Some(o) if o.is_none() => Ok(Namespace::None),
        Some(o) => {
            if let Ok(b) = o.cast::<PyBool>() {
                Ok(b.is_true().into())
            } else if let Ok(s) = o.extract::<String>() {
                Ok(Namespace::Named(s))
            } else {
                Err(PyTypeError::new_err("namespace must be None, a bool or a str"))
            }
        }
    }
}

fn format_arg(format: &str) -> PyResult<ApiFormat> {
    format.parse().map_err(value_err)
}

fn mode_arg(mode: Option<&str>) -> PyResult<Option<ExecutionMode>> {
    mode.map(|m| m.parse().map_err(value_err)).transpose()
}

/// Calls as `{"id","name","arguments"}` dicts (arguments as str or dict) or
/// `(id, name, arguments)` tuples.
fn calls_arg(obj: &Bound<'_, PyAny>) -> PyResult<Vec<ToolCall>> {
    let raw = to_json(obj)?;
    let items = raw.as_array().ok_or_else(|| PyTypeError::new_err("calls must be a list"))?;
    items
        .iter()
        .map(|item| {
            let (id, name, args) = match item {
                Value::Object(m) => (m.get("id"), m.get("name"), m.get("arguments")),
                Value::Array(t) if t.len() == 3 => (t.first(), t.get(1), t.get(2)),
                _ => return Err(value_err("each call must be a dict or an (id, name, arguments) tuple")),
            };
            let text = |v: Option<&Value>, what: &str| {
                v.and_then(Value::as_str).map(str::to_string).ok_or_else(|| value_err(format!("call {what} must be a str")))
            };
            let arguments = match args {
                None | Some(Value::Null) => "{}".to_string(),
                Some(Value::String(s)) => s.clone(),
                Some(v @ Value::Object(_)) => v.to_string(),
                Some(_) => return Err(value_err("call arguments must be a str or dict")),
            };
            Ok(ToolCall::new(text(id, "id")?, text(name, "name")?, arguments))
        })
        .collect()
}

/// A tool registry.
///
/// `worker` is the path to the `toolmesh` binary used for isolated mode; the
/// `TOOLMESH_WORKER` environment variable is used when it is omitted.
#[pyclass(module = "toolmesh", name = "Registry")]
pub struct PyRegistry {
    inner: ToolRegistry,
}

#[pymethods]
impl PyRegistry {
    #[new]
    #[pyo3(signature = (separator = '.', mode = "shared", worker = None, timeout = None))]
    fn new(separator: char, mode: &str, worker: Option<PathBuf>, timeout: Option<f64>) -> PyResult<Self> {
        let mut config = ExecutorConfig { mode: mode.parse().map_err(value_err)?, worker_program: worker, ..ExecutorConfig::default() };
        if let Some(t) = timeout {
            if !(t.is_finite() && t > 0.0) {
                return Err(value_err("timeout must be positive"));
            }
            config.per_call_timeout = std::time::Duration::from_secs_f64(t);
        }
        config.validate().map_err(value_err)?;
        if !matches!(separator, '.' | '_' | '-' | '/') {
            return Err(value_err("separator must be one of . _ - /"));
        }
        Ok(Self { inner: ToolRegistry::with_config(separator, config) })
    }

    /// Builds a registry from a manifest JSON string.
    #[staticmethod]
    fn from_manifest(py: Python<'_>, manifest: &str) -> PyResult<Self> {
        let m = Manifest::from_json(manifest).map_err(err)?;
        let inner = py.detach(|| m.build()).map_err(err)?;
        Ok(Self { inner })
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __contains__(&self, name: &str) -> bool {
        self.inner.contains(name)
    }

    fn __repr__(&self) -> String {
        format!("Registry({} tools, mode={})", self.inner.len(), self.inner.execution_mode().label())
    }

    #[getter]
    fn execution_mode(&self) -> &'static str {
        self.inner.execution_mode().label()
    }

    #[setter]
    fn set_execution_mode(&self, mode: &str) -> PyResult<()> {
        self.inner.set_execution_mode(mode.parse().map_err(value_err)?);
        Ok(())
    }

    /// Registers a Python callable. `descriptor` is
    /// `{"name", "description", "params": [{"name", "kind", "required", ...}]}`;
    /// the callable receives the validated arguments as keyword arguments.
    #[pyo3(signature = (func, descriptor, namespace = None))]
    fn register_function(
        &mut self,
        func: Py<PyAny>,
        descriptor: &Bound<'_, PyAny>,
        namespace: Option<String>,
    ) -> PyResult<String> {
        let d: SignatureDescriptor = serde_json::from_value(to_json(descriptor)?).map_err(value_err)?;
        let invoker = Invoker::sync(move |args: Value| {
            Python::attach(|py| {
                let kwargs = to_py(py, &args)?;
                let kwargs = kwargs.bind(py).cast::<PyDict>().map_err(PyErr::from)?;
                let out = func.bind(py).call((), Some(kwargs))?;
                to_json(&out)
            })
            .map_err(|e: PyErr| ToolError::raised(e.to_string()))
        });
        self.inner.register_fn(&d, invoker, namespace.as_deref()).map_err(err)
    }

    /// Registers a built-in toolset: `calculator`, `timing` or `faults`.
    #[pyo3(signature = (key, namespace = None))]
    fn register_hub(&mut self, key: &str, namespace: Option<&Bound<'_, PyAny>>) -> PyResult<Vec<String>> {
        let ns = self::namespace(namespace)?;
        self.inner.register_hub(key, &ns).map_err(err)
    }

    /// Registers every operation of an OpenAPI document (URL, path or inline
    /// text).
    #[pyo3(signature = (spec, base_url = None, namespace = None, bearer_token = None))]
    fn register_openapi(
        &mut self,
        py: Python<'_>,
        spec: &str,
        base_url: Option<&str>,
        namespace: Option<&Bound<'_, PyAny>>,
        bearer_token: Option<String>,
    ) -> PyResult<Vec<String>> {
        let ns = self::namespace(namespace)?;
        let loaded = py.detach(|| load_openapi_spec(spec)).map_err(err)?;
        let base = match base_url {
            Some(b) => b.to_string(),
            None => loaded.default_base_url(spec).map_err(err)?,
        };
        let mut client = HttpClientConfig::new(&base).map_err(err)?;
        if let Some(token) = bearer_token {
            client = client.with_auth(Auth::Bearer { token });
        }
        let inner = &mut self.inner;
        py.detach(|| register_from_openapi(inner, &client, &loaded, &ns)).map_err(err)
    }

    /// Connects to an MCP server over HTTP (`.../sse` selects the SSE
    /// transport) and registers its tools.
    #[pyo3(signature = (url, namespace = None))]
    fn register_mcp(&mut self, py: Python<'_>, url: &str, namespace: Option<&Bound<'_, PyAny>>) -> PyResult<Vec<String>> {
        let ns = self::namespace(namespace)?;
        let endpoint = McpEndpoint::from_url(url).map_err(err)?;
        let inner = &mut self.inner;
        py.detach(|| register_from_mcp(inner, &endpoint, &ns)).map_err(err)
    }

    #[pyo3(signature = (prefix = None, origin = None))]
    fn list_tools(&self, prefix: Option<&str>, origin: Option<&str>) -> PyResult<Vec<String>> {
        let origin = origin.map(|o| o.parse::<Origin>().map_err(value_err)).transpose()?;
        Ok(self.inner.list_tools(prefix, origin))
    }

    /// Tool schemas for `format` (`openai-chatcompletion` or `openai-response`).
    #[pyo3(signature = (format = "openai-chatcompletion"))]
    fn tools_json(&self, py: Python<'_>, format: &str) -> PyResult<Py<PyAny>> {
        let schemas = self.inner.get_tools_json(format_arg(format)?).map_err(err)?;
        to_py(py, &schemas)
    }

    /// Executes normalized calls and returns one result dict per call, in
    /// order: `{"id","name","status","value"|"error","metadata"}`.
    #[pyo3(signature = (calls, mode = None))]
    fn execute_tool_calls(&self, py: Python<'_>, calls: &Bound<'_, PyAny>, mode: Option<&str>) -> PyResult<Py<PyAny>> {
        let calls = calls_arg(calls)?;
        let mode = mode_arg(mode)?;
        let inner = &self.inner;
        let results = py.detach(|| inner.execute_tool_calls(&calls, mode));
        to_py(py, &Value::Array(results.iter().map(|r| r.to_json()).collect()))
    }

    /// Takes the provider's tool calls, executes them and returns the tool
    /// messages to append to the conversation.
    #[pyo3(signature = (payload, format = "openai-chatcompletion", mode = None))]
    fn handle_tool_calls(
        &self,
        py: Python<'_>,
        payload: &Bound<'_, PyAny>,
        format: &str,
        mode: Option<&str>,
    ) -> PyResult<Py<PyAny>> {
        let format = format_arg(format)?;
        let calls = compat::convert_tool_calls(&to_json(payload)?, format).map_err(err)?;
        let mode = mode_arg(mode)?;
        let inner = &self.inner;
        let results = py.detach(|| inner.execute_tool_calls(&calls, mode));
        to_py(py, &messages_to_json(&recover_tool_message(&results, format), format))
    }

    #[pyo3(signature = (other, policy = "error"))]
    fn merge(&mut self, other: PyRef<'_, PyRegistry>, policy: &str) -> PyResult<()> {
        let policy: ConflictPolicy = policy.parse().map_err(value_err)?;
        self.inner.merge(&other.inner, policy).map_err(err)
    }

    fn spinoff(&mut self, prefix: &str) -> PyResult<PyRegistry> {
        Ok(PyRegistry { inner: self.inner.spinoff(prefix).map_err(err)? })
    }

    fn reduce_namespace(&mut self) -> PyResult<()> {
        self.inner.reduce_namespace().map_err(err)
    }

    /// `[(tool, problem)]` for external tools whose source cannot be reached.
    fn health_check(&self, py: Python<'_>) -> Vec<(String, String)> {
        let inner = &self.inner;
        py.detach(|| inner.health_check())
    }

    /// Stops isolated-mode worker processes.
    fn shutdown(&self) {
        self.inner.executor().shutdown();
    }
}

/// Normalizes provider tool calls to `{"id","name","arguments"}` dicts.
#[pyfunction]
#[pyo3(signature = (payload, format = "openai-chatcompletion"))]
fn convert_tool_calls(py: Python<'_>, payload: &Bound<'_, PyAny>, format: &str) -> PyResult<Py<PyAny>> {
    let calls = compat::convert_tool_calls(&to_json(payload)?, format_arg(format)?).map_err(err)?;
    to_py(py, &serde_json::to_value(calls).map_err(err)?)
}

/// A running calculator fixture; stops on `close()` or when collected.
#[pyclass(module = "toolmesh", name = "Fixture")]
pub struct PyFixture {
    handle: Option<FixtureHandle>,
    url: String,
}

#[pymethods]
impl PyFixture {
    #[getter]
    fn url(&self) -> &str {
        &self.url
    }

    #[getter]
    fn hits(&self) -> u64 {
        self.handle.as_ref().map(FixtureHandle::hits).unwrap_or(0)
    }

    fn close(&mut self) {
        self.handle.take();
    }

    fn __enter__(slf: Py<Self>) -> Py<Self> {
        slf
    }

    fn __exit__(&mut self, _exc_type: Py<PyAny>, _exc: Py<PyAny>, _tb: Py<PyAny>) {
        self.close();
    }
}

fn fixture_config(port: u16, failure_rate: f64, failure_kind: &str) -> PyResult<FixtureConfig> {
    Ok(FixtureConfig {
        port,
        failure_rate,
        failure_kind: failure_kind.parse().map_err(value_err)?,
        ..FixtureConfig::default()
    })
}

/// Starts the OpenAPI calculator fixture on 127.0.0.1.
#[pyfunction]
#[pyo3(signature = (port = 0, failure_rate = 0.0, failure_kind = "http-500"))]
fn start_openapi_fixture(port: u16, failure_rate: f64, failure_kind: &str) -> PyResult<PyFixture> {
    let handle = fixtures::serve_openapi_fixture(&fixture_config(port, failure_rate, failure_kind)?).map_err(err)?;
    Ok(PyFixture { url: handle.url(), handle: Some(handle) })
}

/// Starts the MCP calculator fixture (`sse` or `streamable-http`).
#[pyfunction]
#[pyo3(signature = (transport = "sse", port = 0, failure_rate = 0.0, failure_kind = "http-500"))]
fn start_mcp_fixture(transport: &str, port: u16, failure_rate: f64, failure_kind: &str) -> PyResult<PyFixture> {
    let transport: McpFixtureTransport = transport.parse().map_err(value_err)?;
    let handle = fixtures::serve_mcp_fixture(&fixture_config(port, failure_rate, failure_kind)?, transport).map_err(err)?;
    Ok(PyFixture { url: handle.url(), handle: Some(handle) })
}

#[pymodule]
fn toolmesh(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("ToolmeshError", m.py().get_type::<ToolmeshError>())?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<PyRegistry>()?;
    m.add_class::<PyFixture>()?;
    m.add_function(wrap_pyfunction!(convert_tool_calls, m)?)?;
    m.add_function(wrap_pyfunction!(start_openapi_fixture, m)?)?;
    m.add_function(wrap_pyfunction!(start_mcp_fixture, m)?)?;
    Ok(())
}
