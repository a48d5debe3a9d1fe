//! Worker-count control.
//!
//! Every parallel loop in this crate collects per-user (or per-job) results in
//! index order and reduces them sequentially, so outputs do not depend on how
//! many threads ran them.

use rayon::ThreadPoolBuilder;

/// Runs `f` inside a dedicated pool of `workers` threads. `workers == 0` uses
/// the global rayon pool.
pub fn with_workers<R, F>(workers: usize, f: F) -> R
where
    R: Send,
    F: FnOnce() -> R + Send,
{
    if workers == 0 {
        return f();
    }
    match ThreadPoolBuilder::new().num_threads(workers).build() {
        Ok(pool) => pool.install(f),
        Err(_) => f(),
    }
}
