//! Concurrent execution of tool-call batches.
//!
//! Each call is resolved, validated, dispatched and retried independently;
//! a failing call never aborts its siblings and results come back in input
//! order. Shared mode runs tools on a bounded pool inside this process.
//! Isolated mode sends replicable tools by name to worker processes that
//! rebuilt the registry from a [`Manifest`](crate::Manifest); tools that
//! cannot be replicated fall back to shared mode and are annotated with
//! `"fallback": "shared"`.

pub mod frame;
mod pool;
pub mod worker;

use std::collections::{HashMap, HashSet};
use std::path::PathBuf;
use std::sync::atomic::{AtomicU8, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use parking_lot::Mutex;
use serde_json::{json, Value};
use tokio::sync::Semaphore;

use crate::manifest::{Manifest, Source};
use crate::model::{
    sanitize, ErrorCategory, ExecutionMode, Invoker, Tool, ToolCall, ToolCallResult, ToolError, ToolErrorKind,
};
use crate::registry::ToolRegistry;
use crate::schema::{validate_arguments, ValidatedArguments};

pub use pool::{resolve_worker_program, Dispatch, WorkerPool, WORKER_ENV};

/// Retry schedule for transient failures.
#[derive(Debug, Clone, PartialEq)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_backoff: Duration,
    pub multiplier: f64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self { max_attempts: 3, base_backoff: Duration::from_millis(100), multiplier: 2.0 }
    }
}

impl RetryPolicy {
    /// Delay before attempt `attempt + 1`, given `attempt` (1-based) failed.
    pub fn delay_after(&self, attempt: u32) -> Duration {
        let factor = self.multiplier.powi(attempt.saturating_sub(1) as i32);
        self.base_backoff.mul_f64(factor)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExecutorConfig {
    pub mode: ExecutionMode,
    pub shared_workers: usize,
    pub isolated_workers: usize,
    pub per_call_timeout: Duration,
    pub retry: RetryPolicy,
    /// Program started for isolated workers (invoked as `<program> worker`).
    pub worker_program: Option<PathBuf>,
}

impl Default for ExecutorConfig {
    fn default() -> Self {
        let cpus = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
        Self {
            mode: ExecutionMode::Shared,
            shared_workers: cpus * 4,
            isolated_workers: cpus,
            per_call_timeout: Duration::from_secs(30),
            retry: RetryPolicy::default(),
            worker_program: None,
        }
    }
}

impl ExecutorConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.shared_workers == 0 || self.isolated_workers == 0 {
            return Err("worker counts must be at least 1".into());
        }
        if self.per_call_timeout.is_zero() {
            return Err("per-call timeout must be positive".into());
        }
        if self.retry.max_attempts == 0 {
            return Err("max_attempts must be at least 1".into());
        }
        Ok(())
    }
}

const SHARED: u8 = 0;
const ISOLATED: u8 = 1;

pub struct Executor {
    config: ExecutorConfig,
    mode: AtomicU8,
    shared_slots: Arc<Semaphore>,
    pool: Mutex<Option<Arc<WorkerPool>>>,
}

impl std::fmt::Debug for Executor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Executor").field("config", &self.config).field("mode", &self.mode()).finish()
    }
}

impl Executor {
    /// Panics if `config` violates its invariants.
    pub fn new(config: ExecutorConfig) -> Self {
        if let Err(e) = config.validate() {
            panic!("invalid executor config: {e}");
        }
        let mode = match config.mode {
            ExecutionMode::Shared => SHARED,
            ExecutionMode::Isolated => ISOLATED,
        };
        Self {
            shared_slots: Arc::new(Semaphore::new(config.shared_workers)),
            mode: AtomicU8::new(mode),
            config,
            pool: Mutex::new(None),
        }
    }

    pub fn config(&self) -> ExecutorConfig {
        ExecutorConfig { mode: self.mode(), ..self.config.clone() }
    }

    pub fn mode(&self) -> ExecutionMode {
        match self.mode.load(Ordering::Relaxed) {
            ISOLATED => ExecutionMode::Isolated,
            _ => ExecutionMode::Shared,
        }
    }

    pub fn set_mode(&self, mode: ExecutionMode) {
        let raw = match mode {
            ExecutionMode::Shared => SHARED,
            ExecutionMode::Isolated => ISOLATED,
        };
        self.mode.store(raw, Ordering::Relaxed);
    }

    /// Stops all worker processes. They are restarted on the next isolated batch.
    pub fn shutdown(&self) {
        self.pool.lock().take();
    }

    pub async fn execute(
        &self,
        registry: &ToolRegistry,
        calls: &[ToolCall],
        mode: Option<ExecutionMode>,
    ) -> Vec<ToolCallResult> {
        let batch = self.plan(registry, calls, mode);
        crate::runtime::run(batch.run()).await
    }

    pub fn execute_blocking(
        &self,
        registry: &ToolRegistry,
        calls: &[ToolCall],
        mode: Option<ExecutionMode>,
    ) -> Vec<ToolCallResult> {
        let batch = self.plan(registry, calls, mode);
        crate::runtime::block_on(batch.run())
    }

    fn plan(&self, registry: &ToolRegistry, calls: &[ToolCall], mode: Option<ExecutionMode>) -> Batch {
        let effective = mode.unwrap_or_else(|| self.mode());
        let replicas = if effective == ExecutionMode::Isolated { replica_plan(registry) } else { ReplicaPlan::default() };
        let pool = if effective == ExecutionMode::Isolated && !replicas.manifest.sources.is_empty() {
            self.pool_for(&replicas.manifest)
        } else {
            None
        };

        let mut seen = HashSet::new();
        let jobs = calls
            .iter()
            .map(|call| {
                if !seen.insert(call.id.as_str()) {
                    return Job::Done(ToolCallResult::error(
                        &call.id,
                        &call.name,
                        ErrorCategory::Permanent,
                        format!("duplicate call id {:?}", call.id),
                    ));
                }
                let Some(tool) = registry.resolve(&call.name) else {
                    return Job::Done(ToolCallResult::error(
                        &call.id,
                        &call.name,
                        ErrorCategory::Permanent,
                        format!("unknown tool: {}", call.name),
                    ));
                };
                let args = match validate_arguments(tool, &call.arguments) {
                    Ok(a) => a,
                    Err(e) => {
                        return Job::Done(ToolCallResult::sanitized_error(
                            &call.id,
                            &call.name,
                            ErrorCategory::Permanent,
                            &format!("invalid arguments: {e}"),
                            tool.redactions(),
                        ))
                    }
                };
                let route = match effective {
                    ExecutionMode::Shared if tool.is_isolated_only() => {
                        return Job::Done(ToolCallResult::error(
                            &call.id,
                            &call.name,
                            ErrorCategory::Permanent,
                            format!("tool {} may only run in isolated mode", tool.name()),
                        ));
                    }
                    ExecutionMode::Shared => Route::Shared { fallback: None },
                    ExecutionMode::Isolated => match (tool.replica(), &pool) {
                        (Some(r), Some(pool)) if replicas.names.contains(&r.name) => {
                            Route::Isolated { pool: pool.clone(), replica_name: r.name.clone() }
                        }
                        _ if tool.is_isolated_only() => {
                            return Job::Done(ToolCallResult::error(
                                &call.id,
                                &call.name,
                                ErrorCategory::Permanent,
                                format!("tool {} requires a worker process but none is available", tool.name()),
                            ));
                        }
                        (None, _) => Route::Shared { fallback: Some("tool is not replicable".into()) },
                        _ => Route::Shared { fallback: Some("no worker replica available".into()) },
                    },
                };
                Job::Run(Box::new(Pending {
                    id: call.id.clone(),
                    name: call.name.clone(),
                    tool: tool.clone(),
                    args,
                    route,
                }))
            })
            .collect();

        Batch {
            jobs,
            timeout: self.config.per_call_timeout,
            retry: self.config.retry.clone(),
            shared_slots: self.shared_slots.clone(),
        }
    }

    fn pool_for(&self, manifest: &Manifest) -> Option<Arc<WorkerPool>> {
        let program = resolve_worker_program(self.config.worker_program.as_deref())?;
        let key = manifest.to_json();
        let mut slot = self.pool.lock();
        match &*slot {
            Some(pool) if pool.manifest_json() == key => Some(pool.clone()),
            _ => {
                let pool = Arc::new(WorkerPool::new(program, key, self.config.isolated_workers));
                *slot = Some(pool.clone());
                Some(pool)
            }
        }
    }
}

#[derive(Default)]
struct ReplicaPlan {
    manifest: Manifest,
    names: HashSet<String>,
}

// Worker manifest covering every replicable tool whose replica name is unique
// across sources.
fn replica_plan(registry: &ToolRegistry) -> ReplicaPlan {
    let mut by_name: HashMap<&str, Vec<&Source>> = HashMap::new();
    let mut names: Vec<&str> = Vec::new();
    let mut tools: Vec<&Tool> = registry.tools().filter(|t| t.is_replicable()).collect();
    tools.sort_by(|a, b| a.name().cmp(b.name()));
    for t in &tools {
        let r = t.replica().expect("filtered");
        let entry = by_name.entry(r.name.as_str()).or_default();
        if entry.is_empty() {
            names.push(r.name.as_str());
        }
        if !entry.contains(&&r.source) {
            entry.push(&r.source);
        }
    }
    let mut sources: Vec<Source> = Vec::new();
    let mut usable = HashSet::new();
    for name in names {
        let srcs = &by_name[name];
        if srcs.len() != 1 {
            continue;
        }
        if !sources.contains(srcs[0]) {
            sources.push(srcs[0].clone());
        }
        usable.insert(name.to_string());
    }
    ReplicaPlan { manifest: Manifest { separator: registry.separator(), sources }, names: usable }
}

enum Route {
    Shared { fallback: Option<String> },
    Isolated { pool: Arc<WorkerPool>, replica_name: String },
}

struct Pending {
    id: String,
    name: String,
    tool: Tool,
    args: ValidatedArguments,
    route: Route,
}

enum Job {
    Done(ToolCallResult),
    Run(Box<Pending>),
}

struct Batch {
    jobs: Vec<Job>,
    timeout: Duration,
    retry: RetryPolicy,
    shared_slots: Arc<Semaphore>,
}

impl Batch {
    async fn run(self) -> Vec<ToolCallResult> {
        let Batch { jobs, timeout, retry, shared_slots } = self;
        let mut handles = Vec::with_capacity(jobs.len());
        for job in jobs {
            match job {
                Job::Done(r) => handles.push(Err(r)),
                Job::Run(p) => {
                    let (id, name) = (p.id.clone(), p.name.clone());
                    let task = tokio::spawn(run_pending(*p, timeout, retry.clone(), shared_slots.clone()));
                    handles.push(Ok((id, name, task)));
                }
            }
        }
        let mut out = Vec::with_capacity(handles.len());
        for h in handles {
            out.push(match h {
                Err(done) => done,
                Ok((id, name, task)) => match task.await {
                    Ok(r) => r,
                    Err(e) => ToolCallResult::error(id, name, ErrorCategory::Permanent, panic_message(e)),
                },
            });
        }
        out
    }
}

fn panic_message(e: tokio::task::JoinError) -> String {
    if e.is_panic() {
        let payload = e.into_panic();
        let text = payload
            .downcast_ref::<&str>()
            .map(|s| s.to_string())
            .or_else(|| payload.downcast_ref::<String>().cloned())
            .unwrap_or_else(|| "unknown panic".into());
        format!("tool panicked: {text}")
    } else {
        "tool task was cancelled".into()
    }
}

async fn run_pending(p: Pending, timeout: Duration, retry: RetryPolicy, slots: Arc<Semaphore>) -> ToolCallResult {
    let started = Instant::now();
    let mut attempts = 0u32;
    let (mut pool, mut fallback) = match &p.route {
        Route::Shared { fallback } => (None, fallback.clone()),
        Route::Isolated { pool, replica_name } => (Some((pool.clone(), replica_name.clone())), None),
    };
    let outcome = loop {
        attempts += 1;
        let result = match &pool {
            Some((workers, replica_name)) => {
                match workers.call(&p.id, replica_name, p.args.as_value(), timeout).await {
                    Dispatch::Done(r) => r,
                    Dispatch::Unavailable(reason) if p.tool.is_isolated_only() => {
                        break Err(ToolError::new(ToolErrorKind::RequiresIsolation, reason));
                    }
                    Dispatch::Unavailable(reason) => {
                        pool = None;
                        fallback = Some(reason);
                        attempts -= 1;
                        continue;
                    }
                }
            }
            None => {
                let _permit = slots.acquire().await.expect("semaphore never closed");
                invoke_with_timeout(&p.tool, p.args.clone(), timeout).await
            }
        };
        match result {
            Ok(v) => break Ok(v),
            Err(e) if e.category() == ErrorCategory::Transient && attempts < retry.max_attempts => {
                let delay = retry.delay_after(attempts).max(e.retry_after.unwrap_or_default());
                tokio::time::sleep(delay).await;
            }
            Err(e) => break Err(e),
        }
    };
    let mut result = match outcome {
        Ok(v) => ToolCallResult::ok(p.id, p.name, v),
        Err(e) => {
            ToolCallResult::sanitized_error(p.id, p.name, e.category(), &e.message, p.tool.redactions())
        }
    };
    result.set_metadata("mode", json!(if pool.is_some() { "isolated" } else { "shared" }));
    result.set_metadata("attempts", json!(attempts));
    result.set_metadata("elapsed_ms", json!(started.elapsed().as_secs_f64() * 1e3));
    if let Some(reason) = fallback {
        result.set_metadata("fallback", json!("shared"));
        result.set_metadata("fallback_reason", json!(reason));
    }
    result
}

async fn invoke_with_timeout(tool: &Tool, args: ValidatedArguments, timeout: Duration) -> Result<Value, ToolError> {
    match tool.invoker() {
        Invoker::Sync(f) => {
            let f = f.clone();
            let task = tokio::task::spawn_blocking(move || f(args.into_value()));
            match tokio::time::timeout(timeout, task).await {
                Ok(Ok(r)) => r,
                Ok(Err(e)) => Err(ToolError::raised(panic_message(e))),
                Err(_) => Err(ToolError::timeout(timeout)),
            }
        }
        Invoker::Async(f) => match tokio::time::timeout(timeout, f(args.into_value())).await {
            Ok(r) => r,
            Err(_) => Err(ToolError::timeout(timeout)),
        },
    }
}

/// Invokes a tool on already-validated arguments from synchronous code.
/// Asynchronous invokers are driven on the library runtime.
pub fn run_single(tool: &Tool, args: &ValidatedArguments) -> Result<Value, ToolError> {
    match tool.invoker() {
        Invoker::Sync(f) => f(args.as_value().clone()),
        Invoker::Async(f) => crate::runtime::block_on(f(args.as_value().clone())),
    }
}

/// Asynchronous twin of [`run_single`].
pub async fn run_single_async(tool: &Tool, args: &ValidatedArguments) -> Result<Value, ToolError> {
    match tool.invoker() {
        Invoker::Sync(f) => {
            let f = f.clone();
            let args = args.as_value().clone();
            tokio::task::spawn_blocking(move || f(args))
                .await
                .unwrap_or_else(|e| Err(ToolError::raised(panic_message(e))))
        }
        Invoker::Async(f) => crate::runtime::run(f(args.as_value().clone())).await,
    }
}

/// [`run_single`] bounded by `timeout`.
pub fn run_single_timeout(tool: &Tool, args: &ValidatedArguments, timeout: Duration) -> Result<Value, ToolError> {
    let tool = tool.clone();
    let args = args.clone();
    crate::runtime::block_on(async move { invoke_with_timeout(&tool, args, timeout).await })
}

pub(crate) fn error_frame(id: &str, e: &ToolError, secrets: &[String]) -> Value {
    let mut err = json!({"category": e.category().label(), "message": sanitize(&e.message, secrets)});
    if let Some(ra) = e.retry_after {
        err["retry_after_ms"] = json!(ra.as_millis() as u64);
    }
    json!({"id": id, "status": "error", "error": err})
}

pub(crate) fn error_from_frame(err: &Value) -> ToolError {
    let message = err.get("message").and_then(Value::as_str).unwrap_or("worker error").to_string();
    let transient = err.get("category").and_then(Value::as_str) == Some("transient");
    let mut e = ToolError::new(ToolErrorKind::Raised { transient }, message);
    e.retry_after = err.get("retry_after_ms").and_then(Value::as_u64).map(Duration::from_millis);
    e
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifest::Namespace;
    use crate::model::{ParamKind, ParamSpec, SignatureDescriptor};
    use std::sync::atomic::AtomicUsize;

    fn calc_registry() -> ToolRegistry {
        let mut r = ToolRegistry::new();
        r.register_hub("calculator", &Namespace::Default).unwrap();
        r.register_hub("timing", &Namespace::None).unwrap();
        r
    }

    fn call(id: &str, name: &str, args: Value) -> ToolCall {
        ToolCall::new(id, name, args.to_string())
    }

    fn fast_config() -> ExecutorConfig {
        ExecutorConfig {
            retry: RetryPolicy { max_attempts: 3, base_backoff: Duration::from_millis(1), multiplier: 2.0 },
            ..ExecutorConfig::default()
        }
    }

    #[test]
    fn batch_in_order_with_per_call_errors() {
        let r = calc_registry();
        let out = r.execute_tool_calls(
            &[
                call("1", "calculator.add", json!({"a":1,"b":2})),
                call("2", "calculator.subtract", json!({"a":5,"b":3})),
                call("3", "unknown_tool", json!({})),
                call("4", "calculator.divide", json!({"a":1,"b":0})),
                call("5", "calculator.add", json!({"a":1})),
            ],
            None,
        );
        assert_eq!(out.iter().map(|r| r.id()).collect::<Vec<_>>(), ["1", "2", "3", "4", "5"]);
        assert_eq!(out[0].value(), Some(&json!(3)));
        assert_eq!(out[1].value(), Some(&json!(2)));
        let e = out[2].error_info().unwrap();
        assert_eq!((e.category, e.message.as_str()), (ErrorCategory::Permanent, "unknown tool: unknown_tool"));
        let e = out[3].error_info().unwrap();
        assert_eq!((e.category, e.message.as_str()), (ErrorCategory::Permanent, "division by zero"));
        assert!(out[4].error_info().unwrap().message.contains("/b"));
        assert!(r.execute_tool_calls(&[], None).is_empty());
    }

    #[test]
    fn duplicate_ids_rejected_per_call() {
        let r = calc_registry();
        let out = r.execute_tool_calls(
            &[call("x", "calculator.add", json!({"a":1,"b":2})), call("x", "calculator.add", json!({"a":1,"b":2}))],
            None,
        );
        assert!(out[0].is_ok());
        assert!(out[1].error_info().unwrap().message.contains("duplicate"));
    }

    #[test]
    fn mode_setting_and_override() {
        let r = calc_registry();
        assert_eq!(r.execution_mode(), ExecutionMode::Shared);
        r.set_execution_mode(ExecutionMode::Isolated);
        assert_eq!(r.execution_mode(), ExecutionMode::Isolated);
        let out = r.execute_tool_calls(&[call("1", "calculator.add", json!({"a":1,"b":2}))], Some(ExecutionMode::Shared));
        assert_eq!(out[0].metadata()["mode"], "shared");
        assert!(out[0].metadata().get("fallback").is_none());
        assert_eq!(r.execution_mode(), ExecutionMode::Isolated);
    }

    #[test]
    fn retry_bounds() {
        let mut r = ToolRegistry::with_config('.', fast_config());
        let transient_hits = Arc::new(AtomicUsize::new(0));
        let permanent_hits = Arc::new(AtomicUsize::new(0));
        let flaky_hits = Arc::new(AtomicUsize::new(0));
        let (t, p, f) = (transient_hits.clone(), permanent_hits.clone(), flaky_hits.clone());
        r.register_fn(
            &SignatureDescriptor::new("always_transient", ""),
            Invoker::sync(move |_| {
                t.fetch_add(1, Ordering::SeqCst);
                Err(ToolError::raised_transient("try later"))
            }),
            None,
        )
        .unwrap();
        r.register_fn(
            &SignatureDescriptor::new("always_permanent", ""),
            Invoker::sync(move |_| {
                p.fetch_add(1, Ordering::SeqCst);
                Err(ToolError::raised("no"))
            }),
            None,
        )
        .unwrap();
        r.register_fn(
            &SignatureDescriptor::new("flaky", ""),
            Invoker::sync(move |_| {
                if f.fetch_add(1, Ordering::SeqCst) == 0 {
                    Err(ToolError::new(ToolErrorKind::HttpStatus(503), "unavailable"))
                } else {
                    Ok(json!("ok"))
                }
            }),
            None,
        )
        .unwrap();
        let out = r.execute_tool_calls(
            &[call("a", "always_transient", json!({})), call("b", "always_permanent", json!({})), call("c", "flaky", json!({}))],
            None,
        );
        assert_eq!(transient_hits.load(Ordering::SeqCst), 3);
        assert_eq!(out[0].error_info().unwrap().category, ErrorCategory::Transient);
        assert_eq!(permanent_hits.load(Ordering::SeqCst), 1);
        assert_eq!(out[1].metadata()["attempts"], 1);
        assert!(out[2].is_ok());
        assert_eq!(out[2].metadata()["attempts"], 2);
    }

    #[test]
    fn timeout_is_transient_and_retried() {
        let config = ExecutorConfig {
            per_call_timeout: Duration::from_millis(50),
            retry: RetryPolicy { max_attempts: 2, base_backoff: Duration::from_millis(1), multiplier: 1.0 },
            ..ExecutorConfig::default()
        };
        let mut r = ToolRegistry::with_config('.', config);
        r.register_hub("timing", &Namespace::None).unwrap();
        let out = r.execute_tool_calls(&[call("s", "sleep", json!({"ms": 300}))], None);
        let e = out[0].error_info().unwrap();
        assert_eq!(e.category, ErrorCategory::Transient);
        assert!(e.message.contains("timed out"));
        assert_eq!(out[0].metadata()["attempts"], 2);
    }

    #[test]
    fn closure_tools_fall_back_in_isolated_mode() {
        let mut r = calc_registry();
        r.register_fn(
            &SignatureDescriptor::new("double", "").param(ParamSpec::required("x", ParamKind::Number)),
            Invoker::sync(|a| Ok(json!(a["x"].as_f64().unwrap() * 2.0))),
            None,
        )
        .unwrap();
        let shared = r.execute_tool_calls(&[call("1", "double", json!({"x": 4}))], Some(ExecutionMode::Shared));
        let isolated = r.execute_tool_calls(&[call("1", "double", json!({"x": 4}))], Some(ExecutionMode::Isolated));
        assert_eq!(isolated[0].value(), shared[0].value());
        assert_eq!(isolated[0].metadata()["fallback"], "shared");
        assert_eq!(isolated[0].metadata()["mode"], "shared");
    }

    #[test]
    fn isolated_only_tools_refused_in_shared_mode() {
        let mut r = ToolRegistry::new();
        r.register_hub("faults", &Namespace::Default).unwrap();
        let out = r.execute_tool_calls(
            &[call("1", "faults.crash", json!({})), call("2", "faults.fail", json!({"message": "x", "transient": false}))],
            Some(ExecutionMode::Shared),
        );
        assert!(out[0].error_info().unwrap().message.contains("isolated"));
        assert_eq!(out[1].error_info().unwrap().message, "x");
    }

    #[test]
    fn secrets_are_masked() {
        let mut r = ToolRegistry::new();
        let tool = Tool::from_descriptor(
            &SignatureDescriptor::new("leaky", ""),
            Invoker::sync(|_| Err(ToolError::raised("auth failed for token hunter2"))),
        )
        .unwrap()
        .with_redactions(vec!["hunter2".into()]);
        r.register(tool, None).unwrap();
        let out = r.execute_tool_calls(&[call("1", "leaky", json!({}))], None);
        assert_eq!(out[0].error_info().unwrap().message, "auth failed for token ***");
    }

    #[test]
    fn panicking_tool_is_contained() {
        let mut r = calc_registry();
        r.register_fn(&SignatureDescriptor::new("boom", ""), Invoker::sync(|_| panic!("kaboom")), None).unwrap();
        let out = r.execute_tool_calls(
            &[call("1", "boom", json!({})), call("2", "calculator.add", json!({"a": 1, "b": 1}))],
            None,
        );
        assert!(out[0].error_info().unwrap().message.contains("kaboom"));
        assert!(out[1].is_ok());
    }

    #[test]
    fn run_single_sync_async_and_timeout() {
        let r = calc_registry();
        let add = r.get_tool("calculator.add").unwrap();
        let args = validate_arguments(add, r#"{"a":2,"b":3}"#).unwrap();
        assert_eq!(run_single(add, &args).unwrap(), json!(5));
        let sleep = r.get_tool("sleep").unwrap();
        let args = validate_arguments(sleep, r#"{"ms":10}"#).unwrap();
        assert_eq!(run_single(sleep, &args).unwrap(), json!(10));
        let long = validate_arguments(sleep, r#"{"ms":500}"#).unwrap();
        let e = run_single_timeout(sleep, &long, Duration::from_millis(20)).unwrap_err();
        assert_eq!(e.kind, ToolErrorKind::Timeout);
        let v = crate::runtime::block_on({
            let add = add.clone();
            async move {
                let args = validate_arguments(&add, r#"{"a":1,"b":1}"#).unwrap();
                run_single_async(&add, &args).await
            }
        });
        assert_eq!(v.unwrap(), json!(2));
    }

    #[test]
    fn retry_delays_grow_geometrically() {
        let p = RetryPolicy::default();
        assert_eq!(p.delay_after(1), Duration::from_millis(100));
        assert_eq!(p.delay_after(2), Duration::from_millis(200));
        assert_eq!(p.delay_after(3), Duration::from_millis(400));
    }

    #[test]
    fn config_invariants() {
        assert!(ExecutorConfig::default().validate().is_ok());
        assert!(ExecutorConfig { shared_workers: 0, ..ExecutorConfig::default() }.validate().is_err());
        assert!(ExecutorConfig { per_call_timeout: Duration::ZERO, ..ExecutorConfig::default() }.validate().is_err());
    }
}
