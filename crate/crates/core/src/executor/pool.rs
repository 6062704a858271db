use std::path::{Path, PathBuf};
use std::process::Stdio;
use std::time::Duration;

use parking_lot::Mutex;
use serde_json::{json, Value};
use tokio::io::BufReader;
use tokio::process::{Child, ChildStdin, ChildStdout, Command};
use tokio::sync::Semaphore;

use super::frame::{read_frame_async, write_frame_async};
use crate::model::{ToolError, ToolErrorKind};

/// Environment variable naming the worker program.
pub const WORKER_ENV: &str = "TOOLMESH_WORKER";

const BINARY: &str = "toolmesh";
const HANDSHAKE_TIMEOUT: Duration = Duration::from_secs(60);

/// Finds the program to start as a worker: the configured path, then
/// `$TOOLMESH_WORKER`, then the running executable if it is the CLI, then a
/// `toolmesh` binary next to (or one directory above) the running executable.
pub fn resolve_worker_program(configured: Option<&Path>) -> Option<PathBuf> {
    if let Some(p) = configured {
        return Some(p.to_path_buf());
    }
    if let Some(p) = std::env::var_os(WORKER_ENV).filter(|p| !p.is_empty()) {
        return Some(PathBuf::from(p));
    }
    let exe = std::env::current_exe().ok()?;
    let file = format!("{BINARY}{}", std::env::consts::EXE_SUFFIX);
    if exe.file_name().and_then(|n| n.to_str()) == Some(file.as_str()) {
        return Some(exe);
    }
    let dir = exe.parent()?;
    [dir.join(&file), dir.parent()?.join(&file)].into_iter().find(|p| p.is_file())
}

/// Outcome of one dispatch to the pool.
pub enum Dispatch {
    Done(Result<Value, ToolError>),
    /// No worker could be started; the reason is reported to the caller.
    Unavailable(String),
}

struct Worker {
    _child: Child,
    stdin: ChildStdin,
    stdout: BufReader<ChildStdout>,
}

/// A fixed number of worker processes sharing one manifest. Workers start
/// lazily, are reused between calls, and are replaced after a crash or
/// timeout.
pub struct WorkerPool {
    program: PathBuf,
    manifest_json: String,
    slots: Semaphore,
    idle: Mutex<Vec<Worker>>,
    broken: Mutex<Option<String>>,
}

impl WorkerPool {
    pub fn new(program: PathBuf, manifest_json: String, size: usize) -> Self {
        Self {
            program,
            manifest_json,
            slots: Semaphore::new(size.max(1)),
            idle: Mutex::new(Vec::new()),
            broken: Mutex::new(None),
        }
    }

    pub fn manifest_json(&self) -> &str {
        &self.manifest_json
    }

    pub fn broken_reason(&self) -> Option<String> {
        self.broken.lock().clone()
    }

    async fn spawn(&self) -> Result<Worker, String> {
        let mut child = Command::new(&self.program)
            .arg("worker")
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .kill_on_drop(true)
            .spawn()
            .map_err(|e| format!("cannot start worker {}: {e}", self.program.display()))?;
        let mut stdin = child.stdin.take().expect("piped stdin");
        let mut stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
        let manifest: Value = serde_json::from_str(&self.manifest_json).expect("manifest is JSON");
        let handshake = async {
            write_frame_async(&mut stdin, &json!({ "manifest": manifest })).await.map_err(|e| e.to_string())?;
            read_frame_async(&mut stdout).await.map_err(|e| e.to_string())
        };
        let reply = match tokio::time::timeout(HANDSHAKE_TIMEOUT, handshake).await {
            Err(_) => return Err("worker did not become ready in time".into()),
            Ok(Err(e)) => return Err(format!("worker handshake failed: {e}")),
            Ok(Ok(None)) => return Err("worker exited during startup".into()),
            Ok(Ok(Some(v))) => v,
        };
        match reply.get("status").and_then(Value::as_str) {
            Some("ready") => Ok(Worker { _child: child, stdin, stdout }),
            _ => Err(format!(
                "worker failed to load manifest: {}",
                reply.get("error").and_then(Value::as_str).unwrap_or("unknown error")
            )),
        }
    }

    pub async fn call(&self, id: &str, name: &str, arguments: &Value, timeout: Duration) -> Dispatch {
        if let Some(reason) = self.broken_reason() {
            return Dispatch::Unavailable(reason);
        }
        let _permit = self.slots.acquire().await.expect("semaphore never closed");
        let idle = self.idle.lock().pop();
        let mut worker = match idle {
            Some(w) => w,
            None => match self.spawn().await {
                Ok(w) => w,
                Err(reason) => {
                    *self.broken.lock() = Some(reason.clone());
                    return Dispatch::Unavailable(reason);
                }
            },
        };
        let request = json!({"id": id, "name": name, "arguments": arguments});
        let exchange = async {
            write_frame_async(&mut worker.stdin, &request).await?;
            read_frame_async(&mut worker.stdout).await
        };
        let reply = match tokio::time::timeout(timeout, exchange).await {
            // The worker is dropped, which kills it.
            Err(_) => return Dispatch::Done(Err(ToolError::timeout(timeout))),
            Ok(Ok(Some(reply))) => reply,
            Ok(Ok(None)) | Ok(Err(_)) => {
                return Dispatch::Done(Err(ToolError::new(
                    ToolErrorKind::WorkerCrashed,
                    format!("worker process exited while running {name}"),
                )))
            }
        };
        self.idle.lock().push(worker);
        Dispatch::Done(match reply.get("status").and_then(Value::as_str) {
            Some("ok") => Ok(reply.get("value").cloned().unwrap_or(Value::Null)),
            _ => Err(super::error_from_frame(reply.get("error").unwrap_or(&Value::Null))),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn configured_program_wins() {
        let p = resolve_worker_program(Some(Path::new("/opt/bin/worker"))).unwrap();
        assert_eq!(p, PathBuf::from("/opt/bin/worker"));
    }

    #[test]
    fn missing_program_marks_pool_broken() {
        let pool = WorkerPool::new(PathBuf::from("/nonexistent/toolmesh"), "{}".into(), 1);
        let out = crate::runtime::block_on(async move {
            let first = pool.call("1", "x", &json!({}), Duration::from_secs(1)).await;
            (first, pool.broken_reason())
        });
        assert!(matches!(out.0, Dispatch::Unavailable(_)));
        assert!(out.1.unwrap().contains("cannot start worker"));
    }
}
