//! Acceptance runner: one PASS/FAIL line per criterion.
//!
//! Criteria listed in `REPORT_ONLY` are measured and reported but do not fail
//! the run; everything else must pass.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::mpsc;
use std::time::{Duration, Instant};

use proptest::test_runner::{Config, TestCaseError, TestRunner};
use toolmesh_core::bench::{run_bench, BenchConfig, BenchRow, Scenario};
use toolmesh_core::executor::ExecutorConfig;
use toolmesh_core::fixtures::FailureKind;
use toolmesh_core::manifest::Namespace;
use toolmesh_core::model::{ApiFormat, ExecutionMode, ToolCall};
use toolmesh_core::registry::ToolRegistry;

/// Throughput ratios depend on the host; see the README.
const REPORT_ONLY: &[u32] = &[2];

type Outcome = Result<String, String>;
type Criterion = (u32, &'static str, fn() -> Outcome);

fn bench_config(repetitions: usize, modes: Vec<ExecutionMode>) -> BenchConfig {
    BenchConfig {
        scenarios: vec![Scenario::Native, Scenario::Toolset, Scenario::OpenApi, Scenario::Mcp],
        modes,
        calls: 100,
        repetitions,
        auto_fixtures: true,
        worker_program: Some(common::worker_program()),
        ..BenchConfig::default()
    }
}

fn reliability() -> Outcome {
    let started = Instant::now();
    let rows = run_bench(&bench_config(3, vec![ExecutionMode::Shared, ExecutionMode::Isolated])).map_err(|e| e.to_string())?;
    let elapsed = started.elapsed();
    if rows.len() != 8 {
        return Err(format!("{} cells, expected 8", rows.len()));
    }
    let bad: Vec<String> = rows
        .iter()
        .filter(|r| r.success_rate != 1.0)
        .map(|r| format!("{}/{}={}", r.scenario.label(), r.mode.label(), r.success_rate))
        .collect();
    if !bad.is_empty() {
        return Err(format!("success rate below 1.0: {}", bad.join(", ")));
    }
    if elapsed > Duration::from_secs(120) {
        return Err(format!("took {elapsed:?}"));
    }
    Ok(format!("8 cells x 100 calls at success_rate 1.0 in {:.1}s", elapsed.as_secs_f64()))
}

fn throughput_ordering() -> Outcome {
    let rows = run_bench(&bench_config(10, vec![ExecutionMode::Shared])).map_err(|e| e.to_string())?;
    let tp = |s: Scenario| rows.iter().find(|r: &&BenchRow| r.scenario == s).map(|r| r.throughput_cps).unwrap_or(0.0);
    let (native, openapi, mcp) = (tp(Scenario::Native), tp(Scenario::OpenApi), tp(Scenario::Mcp));
    let (r1, r2) = (native / openapi, openapi / mcp);
    let detail = format!(
        "shared calls/s native {native:.0}, openapi {openapi:.0}, mcp {mcp:.0}; native/openapi {r1:.2}x, openapi/mcp {r2:.2}x (need >= 2x each)"
    );
    if r1 >= 2.0 && r2 >= 2.0 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn run_property<S, F>(cases: u32, strategy: S, check: F) -> Result<(), String>
where
    S: proptest::strategy::Strategy,
    F: Fn(S::Value) -> Result<(), String>,
{
    let mut runner = TestRunner::new(Config { cases, failure_persistence: None, ..Config::default() });
    runner.run(&strategy, |v| check(v).map_err(TestCaseError::fail)).map_err(|e| e.to_string())
}

fn registry_algebra() -> Outcome {
    run_property(1000, common::registry_spec(), |spec| common::check_registry_algebra(&spec))?;
    Ok("1000 random registries: spinoff/merge identity, atomicity, integrity".into())
}

fn schema_roundtrip() -> Outcome {
    let total = std::cell::Cell::new(0usize);
    run_property(500, common::descriptor(), |d| {
        total.set(total.get() + common::check_schema_roundtrip(&d)?);
        Ok(())
    })?;
    Ok(format!("500 descriptors, {} argument objects, three validators agree", total.get()))
}

fn wire_identity() -> Outcome {
    for format in ApiFormat::ALL {
        run_property(500, common::call_batch(), |calls| common::check_wire_roundtrip(&calls, format))?;
    }
    common::check_golden_schemas()?;
    Ok("500 batches per format round-trip; golden schemas match".into())
}

fn adapter_equivalence() -> Outcome {
    let c = common::calculators();
    let n = common::check_adapter_equivalence(&c, 200, 2024)?;
    Ok(format!("{n} comparisons against the hub (openapi, mcp sse, mcp streamable)"))
}

fn fault_handling() -> Outcome {
    let mut checked = 0;
    for protocol in common::Protocol::ALL {
        for kind in [FailureKind::Http500, FailureKind::DropConnection, FailureKind::RpcError] {
            common::check_always_failing(protocol, kind)?;
            checked += 1;
        }
        common::check_transient_then_success(protocol)?;
    }
    Ok(format!("{checked} always-failing configurations categorized; fail-once retried with attempts == 2"))
}

fn isolation() -> Outcome {
    common::check_crash_isolation()?;
    Ok("worker crash fails only its call; siblings succeed; shared mode refuses the call".into())
}

fn bridging() -> Outcome {
    let config = ExecutorConfig::default();
    let deadline = config.per_call_timeout;
    let mut registry = ToolRegistry::with_config('.', config);
    registry.register_hub("timing", &Namespace::Default).map_err(|e| e.to_string())?;
    registry.register_hub("calculator", &Namespace::Default).map_err(|e| e.to_string())?;
    let registry = std::sync::Arc::new(registry);
    for flavor in ["current-thread", "multi-thread"] {
        let (tx, rx) = mpsc::channel();
        let r = registry.clone();
        std::thread::spawn(move || {
            let rt = if flavor == "current-thread" {
                tokio::runtime::Builder::new_current_thread().enable_all().build()
            } else {
                tokio::runtime::Builder::new_multi_thread().worker_threads(1).enable_all().build()
            }
            .unwrap();
            let out = rt.block_on(async move {
                let calls = [ToolCall::new("s", "timing.sleep", r#"{"ms":50}"#), ToolCall::new("a", "calculator.add", r#"{"a":1,"b":2}"#)];
                let background = tokio::spawn(async { tokio::time::sleep(Duration::from_millis(10)).await });
                let results = r.execute_tool_calls(&calls, None);
                let _ = background.await;
                results
            });
            let _ = tx.send(out);
        });
        let results = rx.recv_timeout(deadline).map_err(|_| format!("{flavor}: no result within {deadline:?}"))?;
        if !results.iter().all(|r| r.is_ok()) {
            return Err(format!("{flavor}: {:?}", results.iter().map(|r| r.to_json()).collect::<Vec<_>>()));
        }
    }
    Ok("sync batch API completes inside current-thread and multi-thread runtimes".into())
}

fn main() {
    let criteria: [Criterion; 9] = [
        (1, "reliability", reliability),
        (2, "throughput ordering", throughput_ordering),
        (3, "registry algebra", registry_algebra),
        (4, "schema round-trip", schema_roundtrip),
        (5, "wire-format identity", wire_identity),
        (6, "adapter equivalence", adapter_equivalence),
        (7, "fault handling", fault_handling),
        (8, "isolation", isolation),
        (9, "sync/async bridging", bridging),
    ];
    let mut enforced_failures = 0;
    for (n, label, check) in criteria {
        let started = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = started.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {n} {label}: PASS ({secs:.1}s) {detail}"),
            Err(detail) if REPORT_ONLY.contains(&n) => {
                println!("criterion {n} {label}: FAIL [report only] ({secs:.1}s) {detail}")
            }
            Err(detail) => {
                enforced_failures += 1;
                println!("criterion {n} {label}: FAIL ({secs:.1}s) {detail}");
            }
        }
    }
    if enforced_failures > 0 {
        eprintln!("{enforced_failures} acceptance criteria failed");
        std::process::exit(1);
    }
}
