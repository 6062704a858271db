//! Concurrency benchmark: batches of calculator calls per tool kind and
//! execution mode, repeated and summarized as mean and standard deviation.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;
use std::time::Instant;

use serde::Serialize;
use serde_json::{json, Value};

use crate::fixtures::{serve_mcp_fixture, serve_openapi_fixture, FixtureConfig, FixtureHandle, McpFixtureTransport};
use crate::manifest::Namespace;
use crate::mcp::{register_from_mcp, McpEndpoint};
use crate::model::{ExecutionMode, Invoker, ParamKind, ParamSpec, SignatureDescriptor, ToolCall};
use crate::openapi::{load_openapi_spec, register_from_openapi, HttpClientConfig};
use crate::registry::ToolRegistry;
use crate::{hub, ExecutorConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    Native,
    Toolset,
    OpenApi,
    Mcp,
}

impl Scenario {
    pub const ALL: [Scenario; 4] = [Scenario::Native, Scenario::Toolset, Scenario::OpenApi, Scenario::Mcp];

    pub fn label(self) -> &'static str {
        match self {
            Scenario::Native => "native",
            Scenario::Toolset => "toolset",
            Scenario::OpenApi => "openapi",
            Scenario::Mcp => "mcp",
        }
    }
}

impl FromStr for Scenario {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Scenario::ALL
            .into_iter()
            .find(|sc| sc.label() == s)
            .ok_or_else(|| format!("unknown scenario {s:?}; expected native, toolset, openapi or mcp"))
    }
}

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("fixture unreachable: {0}")]
    FixtureUnreachable(String),
    #[error("cannot start fixture: {0}")]
    Fixture(#[from] crate::fixtures::FixtureError),
    #[error("benchmark setup failed: {0}")]
    Setup(String),
}

#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub scenarios: Vec<Scenario>,
    pub modes: Vec<ExecutionMode>,
    pub calls: usize,
    pub repetitions: usize,
    pub openapi_url: String,
    pub mcp_url: String,
    pub auto_fixtures: bool,
    pub worker_program: Option<PathBuf>,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            scenarios: Scenario::ALL.to_vec(),
            modes: vec![ExecutionMode::Shared, ExecutionMode::Isolated],
            calls: 100,
            repetitions: 10,
            openapi_url: "http://127.0.0.1:8000".into(),
            mcp_url: "http://127.0.0.1:8001/sse".into(),
            auto_fixtures: false,
            worker_program: None,
        }
    }
}

/// One (scenario, mode) cell.
#[derive(Debug, Clone, Serialize)]
pub struct BenchRow {
    pub scenario: Scenario,
    pub mode: ExecutionMode,
    pub calls: usize,
    pub repetitions: usize,
    pub wall_time_s: f64,
    pub wall_time_std_s: f64,
    pub throughput_cps: f64,
    pub throughput_std_cps: f64,
    pub success_rate: f64,
    pub p50_ms: f64,
    pub p95_ms: f64,
    /// Calls that ran in shared mode although isolated mode was requested.
    pub fallbacks: usize,
}

pub const CSV_HEADER: &str = "scenario,mode,calls,wall_time_s,throughput_cps,success_rate,p50_ms,p95_ms";

impl BenchRow {
    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{:.6},{:.2},{:.4},{:.3},{:.3}",
            self.scenario.label(),
            self.mode.label(),
            self.calls,
            self.wall_time_s,
            self.throughput_cps,
            self.success_rate,
            self.p50_ms,
            self.p95_ms
        )
    }
}

pub fn render_csv(rows: &[BenchRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(out, "{}", r.csv_line());
    }
    out
}

pub fn render_json(rows: &[BenchRow]) -> Value {
    json!(rows)
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Nearest-rank percentile of an unsorted sample.
pub fn percentile(samples: &[f64], p: f64) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = ((p / 100.0) * sorted.len() as f64).ceil().max(1.0) as usize;
    sorted[rank.min(sorted.len()) - 1]
}

/// Fixtures started for the run; kept alive until the benchmark ends.
#[derive(Default)]
struct Fixtures {
    _openapi: Option<FixtureHandle>,
    _mcp: Option<FixtureHandle>,
}

fn executor_config(cfg: &BenchConfig) -> ExecutorConfig {
    ExecutorConfig { worker_program: cfg.worker_program.clone(), ..ExecutorConfig::default() }
}

fn native_calculator(registry: &mut ToolRegistry) -> Result<(), BenchError> {
    for op in ["add", "subtract", "multiply", "divide"] {
        let descriptor = SignatureDescriptor::new(op, "")
            .param(ParamSpec::required("a", ParamKind::Number))
            .param(ParamSpec::required("b", ParamKind::Number));
        let invoker = Invoker::sync(move |args| {
            let a = args["a"].as_f64().unwrap_or_default();
            let b = args["b"].as_f64().unwrap_or_default();
            hub::calculate(op, a, b)
        });
        registry.register_fn(&descriptor, invoker, Some("calculator")).map_err(|e| BenchError::Setup(e.to_string()))?;
    }
    Ok(())
}

fn build_registry(scenario: Scenario, cfg: &BenchConfig, urls: &(String, String)) -> Result<ToolRegistry, BenchError> {
    let mut registry = ToolRegistry::with_config('.', executor_config(cfg));
    match scenario {
        Scenario::Native => native_calculator(&mut registry)?,
        Scenario::Toolset => {
            registry.register_hub("calculator", &Namespace::Default).map_err(|e| BenchError::Setup(e.to_string()))?;
        }
        Scenario::OpenApi => {
            let spec = load_openapi_spec(&urls.0).map_err(|e| BenchError::FixtureUnreachable(e.to_string()))?;
            let base = spec.default_base_url(&urls.0).map_err(|e| BenchError::Setup(e.to_string()))?;
            let client = HttpClientConfig::new(&base).map_err(|e| BenchError::Setup(e.to_string()))?;
            register_from_openapi(&mut registry, &client, &spec, &Namespace::Default)
                .map_err(|e| BenchError::Setup(e.to_string()))?;
        }
        Scenario::Mcp => {
            let endpoint = McpEndpoint::from_url(&urls.1).map_err(|e| BenchError::Setup(e.to_string()))?;
            register_from_mcp(&mut registry, &endpoint, &Namespace::Default).map_err(|e| {
                if e.is_transient() {
                    BenchError::FixtureUnreachable(e.to_string())
                } else {
                    BenchError::Setup(e.to_string())
                }
            })?;
        }
    }
    Ok(registry)
}

/// The batch used by every scenario: calculator calls cycling through the
/// four operations with nonzero divisors.
pub fn calculator_batch(n: usize) -> Vec<ToolCall> {
    const OPS: [&str; 4] = ["add", "subtract", "multiply", "divide"];
    (0..n)
        .map(|i| {
            let args = json!({"a": i as f64 + 0.5, "b": (i % 7) as f64 + 1.0});
            ToolCall::new(format!("call_{i}"), format!("calculator.{}", OPS[i % 4]), args.to_string())
        })
        .collect()
}

fn run_cell(registry: &ToolRegistry, scenario: Scenario, mode: ExecutionMode, cfg: &BenchConfig) -> BenchRow {
    let batch = calculator_batch(cfg.calls);
    // warm-up: connections, worker processes
    registry.execute_tool_calls(&batch, Some(mode));
    let mut walls = Vec::with_capacity(cfg.repetitions);
    let mut throughputs = Vec::with_capacity(cfg.repetitions);
    let mut latencies = Vec::new();
    let (mut ok, mut total, mut fallbacks) = (0usize, 0usize, 0usize);
    for _ in 0..cfg.repetitions {
        let started = Instant::now();
        let results = registry.execute_tool_calls(&batch, Some(mode));
        let wall = started.elapsed().as_secs_f64();
        walls.push(wall);
        throughputs.push(cfg.calls as f64 / wall.max(f64::MIN_POSITIVE));
        for r in &results {
            total += 1;
            ok += usize::from(r.is_ok());
            fallbacks += usize::from(r.metadata().contains_key("fallback"));
            if let Some(ms) = r.metadata().get("elapsed_ms").and_then(Value::as_f64) {
                latencies.push(ms);
            }
        }
    }
    let (wall, wall_std) = mean_std(&walls);
    let (_, tp_std) = mean_std(&throughputs);
    let tp = cfg.calls as f64 / wall.max(f64::MIN_POSITIVE);
    BenchRow {
        scenario,
        mode,
        calls: cfg.calls,
        repetitions: cfg.repetitions,
        wall_time_s: wall,
        wall_time_std_s: wall_std,
        throughput_cps: tp,
        throughput_std_cps: tp_std,
        success_rate: if total == 0 { 1.0 } else { ok as f64 / total as f64 },
        p50_ms: percentile(&latencies, 50.0),
        p95_ms: percentile(&latencies, 95.0),
        fallbacks,
    }
}

/// Runs every requested (scenario, mode) cell in order.
pub fn run_bench(cfg: &BenchConfig) -> Result<Vec<BenchRow>, BenchError> {
    run_bench_with(cfg, |_| {})
}

/// Like [`run_bench`], reporting each row as soon as it is measured.
pub fn run_bench_with(cfg: &BenchConfig, mut on_row: impl FnMut(&BenchRow)) -> Result<Vec<BenchRow>, BenchError> {
    if cfg.calls == 0 || cfg.repetitions == 0 {
        return Err(BenchError::Setup("calls and repetitions must be positive".into()));
    }
    let mut fixtures = Fixtures::default();
    let mut urls = (cfg.openapi_url.clone(), cfg.mcp_url.clone());
    if cfg.auto_fixtures {
        if cfg.scenarios.contains(&Scenario::OpenApi) {
            let f = serve_openapi_fixture(&FixtureConfig::default())?;
            urls.0 = f.url();
            fixtures._openapi = Some(f);
        }
        if cfg.scenarios.contains(&Scenario::Mcp) {
            let f = serve_mcp_fixture(&FixtureConfig::default(), McpFixtureTransport::Sse)?;
            urls.1 = f.url();
            fixtures._mcp = Some(f);
        }
    }
    let mut rows = Vec::new();
    for &scenario in &cfg.scenarios {
        let registry = build_registry(scenario, cfg, &urls)?;
        for &mode in &cfg.modes {
            let row = run_cell(&registry, scenario, mode, cfg);
            on_row(&row);
            rows.push(row);
        }
        registry.executor().shutdown();
    }
    drop(fixtures);
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn statistics() {
        let (m, s) = mean_std(&[2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0]);
        assert_eq!(m, 5.0);
        assert!((s - 2.138089935299395).abs() < 1e-12);
        assert_eq!(percentile(&[5.0, 1.0, 3.0, 2.0, 4.0], 50.0), 3.0);
        assert_eq!(percentile(&(1..=100).map(f64::from).collect::<Vec<_>>(), 95.0), 95.0);
        assert_eq!(percentile(&[], 50.0), 0.0);
    }

    #[test]
    fn batch_shape() {
        let b = calculator_batch(8);
        assert_eq!(b.len(), 8);
        assert_eq!(b[3].name, "calculator.divide");
        assert!(b.iter().all(|c| serde_json::from_str::<Value>(&c.arguments).unwrap()["b"].as_f64().unwrap() >= 1.0));
    }

    #[test]
    fn in_process_scenarios() {
        let cfg = BenchConfig {
            scenarios: vec![Scenario::Native, Scenario::Toolset],
            modes: vec![ExecutionMode::Shared],
            calls: 20,
            repetitions: 2,
            ..BenchConfig::default()
        };
        let rows = run_bench(&cfg).unwrap();
        assert_eq!(rows.len(), 2);
        for r in &rows {
            assert_eq!(r.success_rate, 1.0);
            assert!((r.throughput_cps - cfg.calls as f64 / r.wall_time_s).abs() < 1e-6 * r.throughput_cps);
        }
        let csv = render_csv(&rows);
        assert_eq!(csv.lines().count(), 3);
        assert!(csv.starts_with(CSV_HEADER));
    }

    #[test]
    fn unreachable_fixture() {
        let cfg = BenchConfig {
            scenarios: vec![Scenario::Mcp],
            mcp_url: "http://127.0.0.1:9/sse".into(),
            calls: 1,
            repetitions: 1,
            ..BenchConfig::default()
        };
        assert!(matches!(run_bench(&cfg), Err(BenchError::FixtureUnreachable(_))));
    }
}
