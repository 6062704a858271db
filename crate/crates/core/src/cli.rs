//! The `toolmesh` command line.
//!
//! Exit codes: 0 success, 2 bad input (arguments, manifest, calls file),
//! 3 internal failure, 4 benchmark fixture unreachable, 5 port in use.

use std::io::{Read, Write};
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::Value;

use crate::bench::{self, BenchConfig, BenchError, Scenario};
use crate::compat::{canonical_json, convert_tool_calls, messages_to_json, recover_tool_message};
use crate::fixtures::{serve_mcp_fixture, serve_openapi_fixture, FixtureConfig, FixtureError, McpFixtureTransport};
use crate::manifest::Manifest;
use crate::model::{ApiFormat, ExecutionMode, Origin};
use crate::registry::ToolRegistry;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_INTERNAL: i32 = 3;
pub const EXIT_UNREACHABLE: i32 = 4;
pub const EXIT_PORT_IN_USE: i32 = 5;

#[derive(Debug, Parser)]
#[command(name = "toolmesh", version, about = "Inspect, render and execute LLM tools from a registry manifest")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Print registered tool names, one per line.
    List {
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        prefix: Option<String>,
        #[arg(long)]
        origin: Option<String>,
    },
    /// Print the tool schemas for an API format as a JSON array.
    Schema {
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long, default_value = "openai-chatcompletion")]
        format: String,
    },
    /// Execute a batch of tool calls and print the resulting tool messages.
    Call {
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// JSON file with the provider's tool calls; `-` or absent reads stdin.
        #[arg(long)]
        calls: Option<PathBuf>,
        #[arg(long)]
        mode: Option<String>,
        #[arg(long, default_value = "openai-chatcompletion")]
        format: String,
    },
    /// Measure batch throughput per tool kind and execution mode.
    Bench {
        #[arg(long, value_delimiter = ',', default_value = "native,toolset,openapi,mcp")]
        scenarios: Vec<String>,
        #[arg(long, default_value_t = 100)]
        calls: usize,
        #[arg(long, default_value = "both")]
        modes: String,
        #[arg(long, value_enum, default_value_t = OutputFormat::Csv)]
        out: OutputFormat,
        #[arg(long, default_value_t = 10)]
        repetitions: usize,
        /// Start local fixtures instead of expecting them to be running.
        #[arg(long)]
        auto_fixtures: bool,
        #[arg(long, default_value = "http://127.0.0.1:8000")]
        openapi_url: String,
        #[arg(long, default_value = "http://127.0.0.1:8001/sse")]
        mcp_url: String,
    },
    /// Run the OpenAPI and MCP calculator fixtures until interrupted.
    ServeFixtures {
        #[arg(long, default_value_t = 8000)]
        openapi_port: u16,
        #[arg(long, default_value_t = 8001)]
        mcp_port: u16,
        #[arg(long, default_value = "sse")]
        transport: String,
        #[arg(long, default_value_t = 0.0)]
        failure_rate: f64,
        #[arg(long, default_value = "http-500")]
        failure_kind: String,
        #[arg(long, default_value_t = 0)]
        latency_ms: u64,
    },
    /// Serve isolated-mode requests on stdin/stdout.
    #[command(hide = true)]
    Worker,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum OutputFormat {
    Csv,
    Json,
}

struct Failure(i32, String);

fn input_error(e: impl std::fmt::Display) -> Failure {
    Failure(EXIT_INPUT, e.to_string())
}

fn load_registry(manifest: Option<&PathBuf>) -> Result<ToolRegistry, Failure> {
    match manifest {
        None => Ok(ToolRegistry::new()),
        Some(path) => Manifest::from_file(path).and_then(|m| m.build()).map_err(input_error),
    }
}

/// Runs the CLI with `args` (including the program name) and returns the
/// exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() { write!(err, "{text}") } else { write!(out, "{text}") };
            return code;
        }
    };
    match dispatch(cli.command, out) {
        Ok(()) => EXIT_OK,
        Err(Failure(code, message)) => {
            let _ = writeln!(err, "error: {message}");
            code
        }
    }
}

fn dispatch(command: Command, out: &mut dyn Write) -> Result<(), Failure> {
    let io = |e: std::io::Error| Failure(EXIT_INTERNAL, e.to_string());
    match command {
        Command::List { manifest, prefix, origin } => {
            let origin = origin.map(|o| o.parse::<Origin>()).transpose().map_err(input_error)?;
            let registry = load_registry(manifest.as_ref())?;
            for name in registry.list_tools(prefix.as_deref(), origin) {
                writeln!(out, "{name}").map_err(io)?;
            }
            Ok(())
        }
        Command::Schema { manifest, format } => {
            let format: ApiFormat = format.parse().map_err(input_error)?;
            let registry = load_registry(manifest.as_ref())?;
            let schemas = registry.get_tools_json(format).map_err(input_error)?;
            writeln!(out, "{}", canonical_json(&schemas)).map_err(io)
        }
        Command::Call { manifest, calls, mode, format } => {
            let format: ApiFormat = format.parse().map_err(input_error)?;
            let mode = mode.map(|m| m.parse::<ExecutionMode>()).transpose().map_err(input_error)?;
            let registry = load_registry(manifest.as_ref())?;
            let text = match calls.as_ref().filter(|p| p.as_os_str() != "-") {
                Some(path) => std::fs::read_to_string(path).map_err(|e| input_error(format!("{}: {e}", path.display())))?,
                None => {
                    let mut s = String::new();
                    std::io::stdin().read_to_string(&mut s).map_err(input_error)?;
                    s
                }
            };
            let raw: Value = serde_json::from_str(&text).map_err(|e| input_error(format!("calls are not JSON: {e}")))?;
            let calls = convert_tool_calls(&raw, format).map_err(input_error)?;
            let results = registry.execute_tool_calls(&calls, mode);
            if results.len() != calls.len() {
                return Err(Failure(EXIT_INTERNAL, "executor returned the wrong number of results".into()));
            }
            let messages = recover_tool_message(&results, format);
            let rendered = serde_json::to_string_pretty(&messages_to_json(&messages, format)).map_err(|e| Failure(EXIT_INTERNAL, e.to_string()))?;
            writeln!(out, "{rendered}").map_err(io)
        }
        Command::Bench { scenarios, calls, modes, out: format, repetitions, auto_fixtures, openapi_url, mcp_url } => {
            let scenarios = scenarios.iter().map(|s| s.trim().parse::<Scenario>()).collect::<Result<Vec<_>, _>>().map_err(input_error)?;
            let modes = match modes.as_str() {
                "both" => vec![ExecutionMode::Shared, ExecutionMode::Isolated],
                other => other
                    .split(',')
                    .map(|m| m.trim().parse::<ExecutionMode>())
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(input_error)?,
            };
            let cfg = BenchConfig {
                scenarios,
                modes,
                calls,
                repetitions,
                openapi_url,
                mcp_url,
                auto_fixtures,
                worker_program: None,
            };
            if let OutputFormat::Csv = format {
                writeln!(out, "{}", bench::CSV_HEADER).map_err(io)?;
            }
            let mut line_error = None;
            let rows = bench::run_bench_with(&cfg, |row| {
                if let OutputFormat::Csv = format {
                    if let Err(e) = writeln!(out, "{}", row.csv_line()).and_then(|_| out.flush()) {
                        line_error.get_or_insert(e);
                    }
                }
            })
            .map_err(|e| match e {
                BenchError::FixtureUnreachable(m) => Failure(EXIT_UNREACHABLE, format!("fixture unreachable: {m}")),
                BenchError::Fixture(FixtureError::PortInUse(p)) => Failure(EXIT_PORT_IN_USE, format!("port {p} is already in use")),
                other => Failure(EXIT_INTERNAL, other.to_string()),
            })?;
            if let Some(e) = line_error {
                return Err(io(e));
            }
            if let OutputFormat::Json = format {
                let text = serde_json::to_string_pretty(&bench::render_json(&rows)).map_err(|e| Failure(EXIT_INTERNAL, e.to_string()))?;
                writeln!(out, "{text}").map_err(io)?;
            }
            Ok(())
        }
        Command::ServeFixtures { openapi_port, mcp_port, transport, failure_rate, failure_kind, latency_ms } => {
            let transport: McpFixtureTransport = transport.parse().map_err(input_error)?;
            let base = FixtureConfig {
                failure_rate,
                failure_kind: failure_kind.parse().map_err(input_error)?,
                artificial_latency: std::time::Duration::from_millis(latency_ms),
                ..FixtureConfig::default()
            };
            let fixture_error = |e: FixtureError| match e {
                FixtureError::PortInUse(p) => Failure(EXIT_PORT_IN_USE, format!("port {p} is already in use")),
                FixtureError::InvalidConfig(m) => Failure(EXIT_INPUT, m),
                other => Failure(EXIT_INTERNAL, other.to_string()),
            };
            let openapi = serve_openapi_fixture(&FixtureConfig { port: openapi_port, ..base.clone() }).map_err(fixture_error)?;
            let mcp = serve_mcp_fixture(&FixtureConfig { port: mcp_port, ..base }, transport).map_err(fixture_error)?;
            writeln!(out, "ready openapi={} mcp={}", openapi.url(), mcp.url()).map_err(io)?;
            out.flush().map_err(io)?;
            crate::runtime::block_on(async {
                let _ = tokio::signal::ctrl_c().await;
            });
            Ok(())
        }
        Command::Worker => {
            let stdin = std::io::stdin().lock();
            let stdout = std::io::stdout().lock();
            crate::executor::worker::serve(stdin, stdout).map_err(|e| Failure(EXIT_INTERNAL, e.to_string()))
        }
    }
}
