//! The library's own async runtime and the sync/async bridge.
//!
//! All background I/O (MCP readers, HTTP requests, batch execution) runs on
//! one process-wide multi-threaded runtime, so blocking entry points never
//! depend on the caller's executor making progress.

use std::future::Future;
use std::sync::OnceLock;

use tokio::runtime::{Handle, Runtime, RuntimeFlavor};

static RUNTIME: OnceLock<Runtime> = OnceLock::new();

pub fn handle() -> &'static Handle {
    RUNTIME
        .get_or_init(|| {
            let threads = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(2).max(2);
            tokio::runtime::Builder::new_multi_thread()
                .worker_threads(threads)
                .thread_name("toolmesh-rt")
                .enable_all()
                .build()
                .expect("failed to start tokio runtime")
        })
        .handle()
}

/// Runs `fut` on the library runtime and awaits it from any executor.
pub async fn run<F>(fut: F) -> F::Output
where
    F: Future + Send + 'static,
    F::Output: Send + 'static,
{
    match handle().spawn(fut).await {
        Ok(v) => v,
        Err(e) => std::panic::resume_unwind(e.into_panic()),
    }
}

/// Runs `fut` to completion from synchronous code.
///
/// Works from plain threads and from inside any async context: the future
/// runs on the library runtime and only the calling thread blocks. On a
/// multi-threaded tokio worker the block is announced with `block_in_place`
/// so sibling tasks migrate away.
pub fn block_on<F>(fut: F) -> F::Output
where
    F: Future + Send + 'static,
    F::Output: Send + 'static,
{
    let task = handle().spawn(fut);
    let wait = move || match futures::executor::block_on(task) {
        Ok(v) => v,
        Err(e) => std::panic::resume_unwind(e.into_panic()),
    };
    match Handle::try_current() {
        Ok(h) if h.runtime_flavor() == RuntimeFlavor::MultiThread => tokio::task::block_in_place(wait),
        _ => wait(),
    }
}
