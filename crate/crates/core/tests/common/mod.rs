//! Generators and independent oracles shared by the property suites and the
//! acceptance runner.
#![allow(dead_code)]

use std::collections::BTreeSet;

use proptest::prelude::*;
use serde_json::{json, Map, Value};
use toolmesh_core::compat::{convert_tool_calls, recover_assistant_message};
use toolmesh_core::executor::ExecutorConfig;
use toolmesh_core::model::{ApiFormat, Invoker, ParamKind, ParamSpec, SignatureDescriptor, ToolCall};
use toolmesh_core::registry::{ConflictPolicy, RegistryError, ToolRegistry};
use toolmesh_core::schema::{check_descriptor, derive_schema, validate_arguments};
use toolmesh_core::model::Tool;

pub fn worker_program() -> std::path::PathBuf {
    env!("CARGO_BIN_EXE_toolmesh").into()
}

pub fn isolated_config() -> ExecutorConfig {
    ExecutorConfig { worker_program: Some(worker_program()), ..ExecutorConfig::default() }
}

// ---------------------------------------------------------------- registry

#[derive(Debug, Clone)]
pub struct RegistrySpec {
    pub separator: char,
    /// (namespace, bare name)
    pub entries: Vec<(Option<String>, String)>,
}

pub fn registry_spec() -> impl Strategy<Value = RegistrySpec> {
    let ns = prop::option::weighted(0.7, prop::sample::select(vec!["alpha", "beta", "gamma", "delta"]));
    let name = prop::sample::select(vec!["add", "sub", "get", "put", "list", "find", "run", "stop"]);
    let entry = (ns, name).prop_map(|(n, b)| (n.map(str::to_string), b.to_string()));
    (prop::sample::select(vec!['.', '_', '-', '/']), prop::collection::vec(entry, 0..24))
        .prop_map(|(separator, entries)| RegistrySpec { separator, entries })
}

fn noop(tag: &str) -> SignatureDescriptor {
    SignatureDescriptor::new(tag, format!("tool {tag}")).param(ParamSpec::required("x", ParamKind::Integer))
}

/// Builds the registry, skipping entries whose rendered name is taken.
pub fn build_registry(spec: &RegistrySpec) -> ToolRegistry {
    let mut r = ToolRegistry::with_separator(spec.separator);
    for (ns, name) in &spec.entries {
        match r.register_fn(&noop(name), Invoker::sync(|_| Ok(Value::Null)), ns.as_deref()) {
            Ok(_) | Err(RegistryError::DuplicateName(_)) => {}
            Err(e) => panic!("unexpected registration error: {e}"),
        }
    }
    r
}

/// A copy sharing every tool (and invoker) with `r`.
pub fn snapshot(r: &ToolRegistry) -> ToolRegistry {
    let mut copy = ToolRegistry::with_separator(r.separator());
    copy.merge(r, ConflictPolicy::Error).expect("merge into empty registry");
    copy
}

fn expect_unchanged(r: &ToolRegistry, before: &ToolRegistry, what: &str) -> Result<(), String> {
    if r != before {
        return Err(format!("{what} failed but mutated the registry"));
    }
    r.check_invariants()
}

/// Spinoff/merge identity, atomicity of failed mutations and integrity after
/// every mutation, for one registry.
pub fn check_registry_algebra(spec: &RegistrySpec) -> Result<(), String> {
    let mut r = build_registry(spec);
    r.check_invariants()?;
    let sep = r.separator();
    let names: BTreeSet<String> = r.list_tools(None, None).into_iter().collect();

    // referential integrity, checked against an independent derivation
    let expected_ns: BTreeSet<String> =
        names.iter().filter_map(|n| n.split_once(sep).map(|(p, _)| p.to_string())).collect();
    if &expected_ns != r.sub_namespaces() {
        return Err(format!("namespaces {:?} != {:?}", r.sub_namespaces(), expected_ns));
    }
    for name in &names {
        if r.get_tool(name).map_err(|e| e.to_string())?.name() != name {
            return Err(format!("{name} resolves to a differently named tool"));
        }
    }

    // spinoff then merge restores the original
    for ns in expected_ns.clone() {
        let before = snapshot(&r);
        let spun = r.spinoff(&ns).map_err(|e| e.to_string())?;
        r.check_invariants()?;
        spun.check_invariants()?;
        let prefix = format!("{ns}{sep}");
        let moved: BTreeSet<String> = spun.list_tools(None, None).into_iter().collect();
        let kept: BTreeSet<String> = r.list_tools(None, None).into_iter().collect();
        if moved.iter().any(|n| !n.starts_with(&prefix)) || kept.iter().any(|n| n.starts_with(&prefix)) {
            return Err(format!("spinoff({ns}) is not a partition"));
        }
        if moved.union(&kept).cloned().collect::<BTreeSet<_>>() != names || !moved.is_disjoint(&kept) {
            return Err(format!("spinoff({ns}) lost or duplicated tools"));
        }
        r.merge(&spun, ConflictPolicy::Error).map_err(|e| e.to_string())?;
        r.check_invariants()?;
        if r != before {
            return Err(format!("merge(spinoff({ns})) did not restore the registry"));
        }
    }

    // failed mutations leave no trace
    let before = snapshot(&r);
    if r.spinoff("no_such_namespace").is_ok() {
        return Err("spinoff of an unknown namespace succeeded".into());
    }
    expect_unchanged(&r, &before, "spinoff")?;

    if let Some(existing) = names.iter().next() {
        let (ns, bare) = match existing.split_once(sep) {
            Some((ns, bare)) => (Some(ns), bare),
            None => (None, existing.as_str()),
        };
        if r.register_fn(&noop(bare), Invoker::sync(|_| Ok(Value::Null)), ns).is_ok() {
            return Err("duplicate registration succeeded".into());
        }
        expect_unchanged(&r, &before, "duplicate register")?;

        let clash = snapshot(&r);
        if r.merge(&clash, ConflictPolicy::Error).is_ok() {
            return Err("conflicting merge succeeded".into());
        }
        expect_unchanged(&r, &before, "conflicting merge")?;

        // a batch whose last member collides inserts nothing
        let fresh = Tool::from_descriptor(&noop("zz_fresh"), Invoker::sync(|_| Ok(Value::Null))).unwrap();
        let dup = Tool::from_descriptor(&noop(bare), Invoker::sync(|_| Ok(Value::Null))).unwrap();
        if r.register_batch(vec![fresh, dup], ns, None).is_ok() {
            return Err("colliding batch succeeded".into());
        }
        expect_unchanged(&r, &before, "colliding batch")?;
    }

    let other_sep = if sep == '.' { '_' } else { '.' };
    if r.merge(&ToolRegistry::with_separator(other_sep), ConflictPolicy::Error).is_ok() {
        return Err("merge across separators succeeded".into());
    }
    expect_unchanged(&r, &before, "separator mismatch merge")?;

    let too_long = "x".repeat(70);
    if r.register_fn(&noop(&too_long), Invoker::sync(|_| Ok(Value::Null)), None).is_ok() {
        return Err("over-long name accepted".into());
    }
    expect_unchanged(&r, &before, "over-long register")?;

    if expected_ns.len() == 1 {
        let prefix = format!("{}{sep}", expected_ns.iter().next().unwrap());
        let stripped: Vec<String> = names.iter().map(|n| n.strip_prefix(&prefix).unwrap_or(n).to_string()).collect();
        let distinct: BTreeSet<String> = stripped.iter().cloned().collect();
        if distinct.len() == stripped.len() {
            r.reduce_namespace().map_err(|e| e.to_string())?;
            r.check_invariants()?;
            if r.list_tools(None, None).into_iter().collect::<BTreeSet<_>>() != distinct {
                return Err("reduce_namespace produced unexpected names".into());
            }
        } else {
            if r.reduce_namespace().is_ok() {
                return Err("reduce_namespace succeeded despite a collision".into());
            }
            expect_unchanged(&r, &before, "colliding reduce_namespace")?;
        }
    } else {
        if r.reduce_namespace().is_ok() {
            return Err("reduce_namespace succeeded without a single namespace".into());
        }
        expect_unchanged(&r, &before, "reduce_namespace")?;
    }
    Ok(())
}

// ---------------------------------------------------------------- schemas

fn leaf_kind() -> impl Strategy<Value = ParamKind> {
    prop_oneof![
        Just(ParamKind::String),
        Just(ParamKind::Integer),
        Just(ParamKind::Number),
        Just(ParamKind::Boolean),
        Just(ParamKind::Null),
        prop::collection::vec(
            prop::sample::select(vec![json!(0), json!(1), json!(2.5), json!("x"), json!("y"), json!(true), Value::Null]),
            1..4
        )
        .prop_map(ParamKind::Enum),
    ]
}

pub fn param_kind() -> impl Strategy<Value = ParamKind> {
    leaf_kind().prop_recursive(2, 8, 3, |inner| {
        prop_oneof![
            inner.clone().prop_map(|k| ParamKind::Array(Box::new(k))),
            prop::collection::vec(inner.clone(), 2..4).prop_map(ParamKind::Union),
            params(inner, 0..3).prop_map(ParamKind::Object),
        ]
    })
}

fn params(kind: impl Strategy<Value = ParamKind>, count: std::ops::Range<usize>) -> impl Strategy<Value = Vec<ParamSpec>> {
    prop::collection::vec((kind, any::<bool>(), any::<prop::sample::Index>(), any::<bool>()), count).prop_map(|raw| {
        raw.into_iter()
            .enumerate()
            .map(|(i, (kind, required, pick, use_default))| {
                let name = ["a", "b", "c", "d"][i].to_string();
                let mut spec = if required { ParamSpec::required(name, kind) } else { ParamSpec::optional(name, kind) };
                if !required && use_default {
                    let fitting: Vec<Value> = universe().into_iter().filter(|v| kind_accepts(&spec.kind, v)).collect();
                    if !fitting.is_empty() {
                        spec = spec.with_default(fitting[pick.index(fitting.len())].clone());
                    }
                }
                spec
            })
            .collect()
    })
}

pub fn descriptor() -> impl Strategy<Value = SignatureDescriptor> {
    (params(param_kind(), 0..4), prop::option::of("[a-z ]{0,12}")).prop_map(|(ps, text)| {
        let mut d = SignatureDescriptor::new("generated", text.unwrap_or_default());
        d.params = ps;
        d
    })
}

/// Small value domain covering every JSON type.
pub fn universe() -> Vec<Value> {
    vec![
        Value::Null,
        json!(true),
        json!(0),
        json!(2.0),
        json!(2.5),
        json!("x"),
        json!([]),
        json!([0, "x"]),
        json!({}),
    ]
}

fn numeric_eq(a: &Value, b: &Value) -> bool {
    match (a.as_f64(), b.as_f64()) {
        (Some(x), Some(y)) if a.is_number() && b.is_number() => x == y,
        _ => a == b,
    }
}

/// Direct acceptance check against a parameter kind.
pub fn kind_accepts(kind: &ParamKind, v: &Value) -> bool {
    match kind {
        ParamKind::String => v.is_string(),
        ParamKind::Integer => v.as_f64().is_some_and(|f| f.fract() == 0.0),
        ParamKind::Number => v.is_number(),
        ParamKind::Boolean => v.is_boolean(),
        ParamKind::Null => v.is_null(),
        ParamKind::Array(inner) => v.as_array().is_some_and(|items| items.iter().all(|i| kind_accepts(inner, i))),
        ParamKind::Object(fields) => object_accepts(fields, v),
        ParamKind::Enum(values) => values.iter().any(|e| numeric_eq(e, v)),
        ParamKind::Union(members) => members.iter().any(|m| kind_accepts(m, v)),
    }
}

pub fn object_accepts(fields: &[ParamSpec], v: &Value) -> bool {
    let Some(obj) = v.as_object() else { return false };
    obj.keys().all(|k| fields.iter().any(|f| &f.name == k))
        && fields.iter().all(|f| match obj.get(&f.name) {
            Some(x) => kind_accepts(&f.kind, x),
            None => !f.required,
        })
}

/// Candidate values for one parameter: the universe, enum members and a few
/// objects built from nested fields.
fn candidates(kind: &ParamKind) -> Vec<Value> {
    let mut out = universe();
    match kind {
        ParamKind::Enum(values) => out.extend(values.iter().cloned()),
        ParamKind::Union(members) => {
            for m in members {
                if let ParamKind::Enum(values) = m {
                    out.extend(values.iter().cloned());
                }
            }
        }
        ParamKind::Object(fields) => {
            for obj in enumerate_objects(fields).into_iter().take(6) {
                out.push(obj);
            }
        }
        ParamKind::Array(inner) => {
            if let ParamKind::Enum(values) = inner.as_ref() {
                out.push(Value::Array(values.clone()));
            }
        }
        _ => {}
    }
    out
}

/// Every argument object over the candidate domain, plus variants with an
/// unknown key.
pub fn enumerate_objects(fields: &[ParamSpec]) -> Vec<Value> {
    let mut acc = vec![Map::new()];
    for f in fields {
        let options = candidates(&f.kind);
        let mut next = Vec::with_capacity(acc.len() * (options.len() + 1));
        for partial in &acc {
            next.push(partial.clone());
            for o in &options {
                let mut m = partial.clone();
                m.insert(f.name.clone(), o.clone());
                next.push(m);
            }
        }
        acc = next;
    }
    let mut out: Vec<Value> = acc.into_iter().map(Value::Object).collect();
    let mut stray = Map::new();
    stray.insert("zz_unknown".into(), json!(1));
    out.push(Value::Object(stray));
    out
}

/// Adds `additionalProperties: false` to every object node with properties.
pub fn closed(schema: &Value) -> Value {
    match schema {
        Value::Object(m) => {
            let mut out: Map<String, Value> = m.iter().map(|(k, v)| (k.clone(), closed(v))).collect();
            if let Some(Value::Object(props)) = m.get("properties") {
                out.insert("properties".into(), Value::Object(props.iter().map(|(k, v)| (k.clone(), closed(v))).collect()));
                out.insert("additionalProperties".into(), Value::Bool(false));
            }
            out.into()
        }
        Value::Array(items) => Value::Array(items.iter().map(closed).collect()),
        other => other.clone(),
    }
}

/// Returns the number of argument objects compared.
pub fn check_schema_roundtrip(d: &SignatureDescriptor) -> Result<usize, String> {
    check_descriptor(d).map_err(|e| format!("generator produced an invalid descriptor: {e}"))?;
    let schema = derive_schema(d);
    let mut doc = schema.as_value().clone();
    doc.as_object_mut().unwrap().insert("$schema".into(), json!("https://json-schema.org/draft/2020-12/schema"));
    if let Err(e) = jsonschema::draft202012::meta::validate(&doc) {
        return Err(format!("derived schema is not valid draft 2020-12: {e}"));
    }
    let reference = jsonschema::draft202012::new(&closed(&doc)).map_err(|e| e.to_string())?;
    let tool = Tool::from_descriptor(d, Invoker::sync(|_| Ok(Value::Null))).map_err(|e| e.to_string())?;
    let objects = enumerate_objects(&d.params);
    for obj in &objects {
        let ours = validate_arguments(&tool, &obj.to_string()).is_ok();
        let brute = object_accepts(&d.params, obj);
        let theirs = reference.is_valid(obj);
        if ours != brute || brute != theirs {
            return Err(format!(
                "disagreement on {obj}: validate_arguments={ours} direct={brute} draft2020-12={theirs}; schema {}",
                schema.as_value()
            ));
        }
    }
    Ok(objects.len())
}

// ---------------------------------------------------------------- wire formats

pub fn call_batch() -> impl Strategy<Value = Vec<ToolCall>> {
    let args = prop_oneof![
        Just("{}".to_string()),
        prop::collection::btree_map("[a-z]{1,6}", prop_oneof![
            any::<i64>().prop_map(|i| json!(i)),
            any::<bool>().prop_map(|b| json!(b)),
            "\\PC{0,10}".prop_map(|s| json!(s)),
            (-1e9f64..1e9).prop_map(|f| json!(f)),
        ], 0..5)
        .prop_map(|m| serde_json::to_string(&m).unwrap()),
        "\\PC{0,20}",
    ];
    prop::collection::vec(("[A-Za-z0-9_-]{1,24}", "[a-z][a-z0-9_.]{0,30}", args), 0..12)
        .prop_map(|raw| raw.into_iter().map(|(id, name, a)| ToolCall::new(id, name, a)).collect())
}

pub fn check_wire_roundtrip(calls: &[ToolCall], format: ApiFormat) -> Result<(), String> {
    let message = recover_assistant_message(calls, format);
    let text = serde_json::to_string(&message.to_json(format)).map_err(|e| e.to_string())?;
    let parsed: Value = serde_json::from_str(&text).map_err(|e| e.to_string())?;
    let back = convert_tool_calls(&parsed, format).map_err(|e| e.to_string())?;
    if back != calls {
        return Err(format!("{format}: {calls:?} came back as {back:?}"));
    }
    Ok(())
}

// ---------------------------------------------------------------- adapters

use rand::{Rng, SeedableRng};
use toolmesh_core::fixtures::{serve_mcp_fixture, serve_openapi_fixture, FailureKind, FixtureConfig, FixtureHandle, McpFixtureTransport};
use toolmesh_core::manifest::Namespace;
use toolmesh_core::mcp::{register_from_mcp, McpEndpoint};
use toolmesh_core::model::{ErrorCategory, ExecutionMode, ToolCallResult};
use toolmesh_core::openapi::{load_openapi_spec, register_from_openapi, HttpClientConfig};

pub const OPS: [&str; 4] = ["add", "subtract", "multiply", "divide"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Protocol {
    OpenApi,
    McpSse,
    McpStreamable,
}

impl Protocol {
    pub const ALL: [Protocol; 3] = [Protocol::OpenApi, Protocol::McpSse, Protocol::McpStreamable];

    pub fn namespace(self) -> &'static str {
        match self {
            Protocol::OpenApi => "oa",
            Protocol::McpSse => "sse",
            Protocol::McpStreamable => "shttp",
        }
    }
}

/// Starts a fixture for `protocol` and registers its tools under the
/// protocol's namespace.
pub fn attach(registry: &mut ToolRegistry, protocol: Protocol, config: &FixtureConfig) -> FixtureHandle {
    let ns = Namespace::Named(protocol.namespace().into());
    match protocol {
        Protocol::OpenApi => {
            let f = serve_openapi_fixture(config).expect("openapi fixture");
            let spec = load_openapi_spec(&f.url()).expect("load fixture document");
            let client = HttpClientConfig::new(&spec.default_base_url(&f.url()).unwrap()).unwrap();
            register_from_openapi(registry, &client, &spec, &ns).expect("register openapi");
            f
        }
        Protocol::McpSse | Protocol::McpStreamable => {
            let transport =
                if protocol == Protocol::McpSse { McpFixtureTransport::Sse } else { McpFixtureTransport::StreamableHttp };
            let f = serve_mcp_fixture(config, transport).expect("mcp fixture");
            let endpoint = McpEndpoint::from_url(&f.url()).unwrap();
            register_from_mcp(registry, &endpoint, &ns).expect("register mcp");
            f
        }
    }
}

pub struct Calculators {
    pub registry: ToolRegistry,
    _fixtures: Vec<FixtureHandle>,
}

pub fn calculators() -> Calculators {
    let mut registry = ToolRegistry::new();
    registry.register_hub("calculator", &Namespace::Named("hub".into())).unwrap();
    let fixtures = Protocol::ALL.iter().map(|&p| attach(&mut registry, p, &FixtureConfig::default())).collect();
    Calculators { registry, _fixtures: fixtures }
}

fn operand(rng: &mut impl Rng) -> f64 {
    let magnitude = 10f64.powi(rng.random_range(-6..7));
    let x = rng.random_range(-1.0..1.0) * magnitude;
    if rng.random_bool(0.2) {
        x.round()
    } else {
        x
    }
}

/// Runs `pairs` random operand pairs per operation through the hub and every
/// protocol adapter and compares the results. Returns the number of
/// comparisons made.
pub fn check_adapter_equivalence(c: &Calculators, pairs: usize, seed: u64) -> Result<usize, String> {
    let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
    let mut compared = 0;
    for op in OPS {
        let args: Vec<(f64, f64)> = (0..pairs)
            .map(|_| {
                let a = operand(&mut rng);
                let mut b = operand(&mut rng);
                while op == "divide" && b == 0.0 {
                    b = operand(&mut rng);
                }
                (a, b)
            })
            .collect();
        let batch = |ns: &str| -> Vec<ToolCall> {
            args.iter()
                .enumerate()
                .map(|(i, (a, b))| ToolCall::new(format!("{ns}-{i}"), format!("{ns}.{op}"), json!({"a": a, "b": b}).to_string()))
                .collect()
        };
        let reference = c.registry.execute_tool_calls(&batch("hub"), Some(ExecutionMode::Shared));
        for p in Protocol::ALL {
            let got = c.registry.execute_tool_calls(&batch(p.namespace()), Some(ExecutionMode::Shared));
            for ((want, have), (a, b)) in reference.iter().zip(&got).zip(&args) {
                let (Some(x), Some(y)) = (want.value().and_then(Value::as_f64), have.value().and_then(Value::as_f64)) else {
                    return Err(format!("{p:?} {op}({a}, {b}): {:?} vs {:?}", want.to_json(), have.to_json()));
                };
                let agree = if op == "divide" { x == y || ((x - y) / x).abs() < 1e-12 } else { x == y };
                if !agree {
                    return Err(format!("{p:?} {op}({a}, {b}) = {y}, hub says {x}"));
                }
                compared += 1;
            }
        }
    }
    Ok(compared)
}

// ---------------------------------------------------------------- faults

pub fn failing(kind: FailureKind) -> FixtureConfig {
    FixtureConfig { failure_rate: 1.0, failure_kind: kind, ..FixtureConfig::default() }
}

pub fn expected_category(kind: FailureKind) -> ErrorCategory {
    match kind {
        FailureKind::Http500 | FailureKind::DropConnection => ErrorCategory::Transient,
        FailureKind::RpcError => ErrorCategory::Permanent,
    }
}

pub fn attempts(r: &ToolCallResult) -> u64 {
    r.metadata().get("attempts").and_then(Value::as_u64).unwrap_or(0)
}

fn sample_calls(ns: &str, n: usize) -> Vec<ToolCall> {
    (0..n).map(|i| ToolCall::new(format!("f{i}"), format!("{ns}.{}", OPS[i % 4]), r#"{"a":6,"b":3}"#)).collect()
}

/// With every call failing, each result is an error of the expected category;
/// transient failures use the whole retry budget.
pub fn check_always_failing(protocol: Protocol, kind: FailureKind) -> Result<(), String> {
    let mut registry = ToolRegistry::new();
    let _fixture = attach(&mut registry, protocol, &failing(kind));
    let max = registry.executor().config().retry.max_attempts as u64;
    let results = registry.execute_tool_calls(&sample_calls(protocol.namespace(), 4), Some(ExecutionMode::Shared));
    let want = expected_category(kind);
    for r in &results {
        let Some(e) = r.error_info() else {
            return Err(format!("{protocol:?}/{kind:?}: {} succeeded", r.id()));
        };
        if e.category != want {
            return Err(format!("{protocol:?}/{kind:?}: category {:?}, expected {want:?} ({})", e.category, e.message));
        }
        let expected_attempts = if want == ErrorCategory::Transient { max } else { 1 };
        if attempts(r) != expected_attempts {
            return Err(format!("{protocol:?}/{kind:?}: {} attempts, expected {expected_attempts}", attempts(r)));
        }
    }
    Ok(())
}

/// The first call fails transiently, the retry succeeds.
pub fn check_transient_then_success(protocol: Protocol) -> Result<(), String> {
    let mut registry = ToolRegistry::new();
    let config = FixtureConfig { fail_first: 1, failure_kind: FailureKind::Http500, ..FixtureConfig::default() };
    let fixture = attach(&mut registry, protocol, &config);
    let call = sample_calls(protocol.namespace(), 1);
    let results = registry.execute_tool_calls(&call, Some(ExecutionMode::Shared));
    let r = &results[0];
    if r.value() != Some(&json!(9)) {
        return Err(format!("{protocol:?}: {:?}", r.to_json()));
    }
    if attempts(r) != 2 || fixture.hits() != 2 {
        return Err(format!("{protocol:?}: attempts {} hits {}", attempts(r), fixture.hits()));
    }
    Ok(())
}

// ---------------------------------------------------------------- isolation

/// A batch with a process-killing call in the middle: only that call fails,
/// in isolated mode; in shared mode the call is refused before it runs.
pub fn check_crash_isolation() -> Result<(), String> {
    let registry = {
        let mut r = ToolRegistry::with_config('.', isolated_config());
        r.register_hub("calculator", &Namespace::Default).map_err(|e| e.to_string())?;
        r.register_hub("faults", &Namespace::Default).map_err(|e| e.to_string())?;
        r
    };
    let mut calls: Vec<ToolCall> =
        (0..8).map(|i| ToolCall::new(format!("c{i}"), "calculator.add", format!(r#"{{"a":{i},"b":1}}"#))).collect();
    calls.insert(4, ToolCall::new("boom", "faults.crash", "{}"));

    let results = registry.execute_tool_calls(&calls, Some(ExecutionMode::Isolated));
    for (call, r) in calls.iter().zip(&results) {
        if r.id() != call.id {
            return Err(format!("result order broken at {}", call.id));
        }
        if call.id == "boom" {
            let e = r.error_info().ok_or("crashing call succeeded")?;
            if !e.message.contains("exited") {
                return Err(format!("unexpected crash message {:?}", e.message));
            }
        } else if !r.is_ok() || r.metadata().get("mode") != Some(&json!("isolated")) {
            return Err(format!("sibling {} affected: {:?}", call.id, r.to_json()));
        }
    }
    // the pool recovers for the next batch
    let again = registry.execute_tool_calls(&calls[..2], Some(ExecutionMode::Isolated));
    if !again.iter().all(|r| r.is_ok()) {
        return Err("pool did not recover after a crash".into());
    }

    let shared = registry.execute_tool_calls(&calls, Some(ExecutionMode::Shared));
    let refused = shared[4].error_info().ok_or("crash ran in shared mode")?;
    if refused.category != ErrorCategory::Permanent || !refused.message.contains("isolated") {
        return Err(format!("unexpected shared-mode refusal {refused:?}"));
    }
    if shared.iter().filter(|r| r.is_ok()).count() != 8 {
        return Err("shared-mode siblings failed".into());
    }
    registry.executor().shutdown();
    Ok(())
}

// ---------------------------------------------------------------- golden files

fn golden(file: &str) -> Result<String, String> {
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(file);
    std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))
}

/// Rendered calculator schemas equal the recorded provider shapes byte for byte.
pub fn check_golden_schemas() -> Result<(), String> {
    let mut r = ToolRegistry::new();
    r.register_hub("calculator", &Namespace::Default).map_err(|e| e.to_string())?;
    let pretty = |v: &Value| serde_json::to_string_pretty(v).unwrap() + "\n";
    for format in ApiFormat::ALL {
        let rendered = pretty(&r.get_tools_json(format).map_err(|e| e.to_string())?);
        if rendered != golden(&format!("calculator.{format}.json"))? {
            return Err(format!("{format} rendering differs from the golden file"));
        }
    }
    let strict = r
        .get_tools_json_with(ApiFormat::ChatCompletion, &toolmesh_core::model::NameConstraint::openai_strict())
        .map_err(|e| e.to_string())?;
    if pretty(&strict) != golden("calculator.strict.openai-chatcompletion.json")? {
        return Err("strict-name rendering differs from the golden file".into());
    }
    Ok(())
}
