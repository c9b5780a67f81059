//! Run-level parallelism with a thread cap.
//!
//! Individual training runs are sequential by design; only whole runs
//! (seeds, ablation tags) execute concurrently. Results come back in
//! input order no matter how the work was scheduled, so parallel and
//! serial executions are interchangeable.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

/// Maximum concurrent runs: the `PAMNET_THREADS` environment variable
/// when set (minimum 1), otherwise the machine's available
/// parallelism.
pub fn thread_cap() -> usize {
    if let Ok(raw) = std::env::var("PAMNET_THREADS") {
        if let Ok(n) = raw.trim().parse::<usize>() {
            return n.max(1);
        }
    }
    std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
}

/// Runs `job(0..count)` across at most `max_threads` workers and
/// returns the results indexed by input position.
pub fn run_parallel<T, F>(count: usize, max_threads: usize, job: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync,
{
    if count == 0 {
        return Vec::new();
    }
    let workers = max_threads.max(1).min(count);
    if workers == 1 {
        return (0..count).map(job).collect();
    }

    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<T>>> = (0..count).map(|_| Mutex::new(None)).collect();
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= count {
                    break;
                }
                let result = job(i);
                *slots[i].lock().expect("result slot") = Some(result);
            });
        }
    });
    slots
        .into_iter()
        .map(|slot| {
            slot.into_inner()
                .expect("result slot")
                .expect("worker completed")
        })
        .collect()
}
