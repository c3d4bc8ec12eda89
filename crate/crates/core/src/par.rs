//! Data-parallel helpers.
//!
//! Every helper here is a parallel *map* that returns results in input order.
//! Reductions are always done by the caller, sequentially, over the returned
//! vector, so results are bit-identical whether the work ran on one thread or
//! many. With the `parallel` feature disabled, or with parallelism switched
//! off at runtime, the same code runs as a plain sequential loop.

use std::sync::atomic::{AtomicBool, Ordering};

static PARALLEL: AtomicBool = AtomicBool::new(true);

/// Execution strategy for the data-parallel loops.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exec {
    Sequential,
    Parallel,
}

/// Switch the process-wide execution strategy.
///
/// Only affects speed: outputs do not depend on it.
pub fn set_exec(exec: Exec) {
    PARALLEL.store(exec == Exec::Parallel, Ordering::Relaxed);
}

pub fn exec() -> Exec {
    if cfg!(feature = "parallel") && PARALLEL.load(Ordering::Relaxed) {
        Exec::Parallel
    } else {
        Exec::Sequential
    }
}

/// Cap the number of worker threads. Must be called before any parallel work.
#[cfg(feature = "parallel")]
pub fn init_threads(threads: usize) -> bool {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build_global()
        .is_ok()
}

#[cfg(not(feature = "parallel"))]
pub fn init_threads(_threads: usize) -> bool {
    true
}

/// `f(0), f(1), ..., f(n-1)` in order.
pub fn map_range<U, F>(n: usize, f: F) -> Vec<U>
where
    U: Send,
    F: Fn(usize) -> U + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec() == Exec::Parallel && n > 1 {
        use rayon::prelude::*;
        return (0..n).into_par_iter().map(f).collect();
    }
    (0..n).map(f).collect()
}

/// `f(&items[i])` for every item, in order.
pub fn map<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec() == Exec::Parallel && items.len() > 1 {
        use rayon::prelude::*;
        return items.par_iter().map(f).collect();
    }
    items.iter().map(f).collect()
}

/// Apply `f(index, chunk)` to consecutive mutable chunks of `data`.
pub fn for_each_chunk_mut<T, F>(data: &mut [T], chunk: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec() == Exec::Parallel && data.len() > chunk {
        use rayon::prelude::*;
        data.par_chunks_mut(chunk)
            .enumerate()
            .for_each(|(i, c)| f(i, c));
        return;
    }
    for (i, c) in data.chunks_mut(chunk).enumerate() {
        f(i, c);
    }
}
