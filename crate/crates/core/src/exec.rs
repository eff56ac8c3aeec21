//! Chunked map over slices, data-parallel when the `parallel` feature is on.
//!
//! Chunk boundaries never depend on the thread count, and results come back
//! in chunk order, so any reduction the caller performs over them is
//! reproducible bit for bit, with or without rayon.

use std::sync::atomic::{AtomicBool, Ordering};

static FORCE_SEQUENTIAL: AtomicBool = AtomicBool::new(false);

/// Execution policy for batched evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exec {
    Sequential,
    Parallel,
}

/// Overrides the policy process-wide. `Parallel` is a no-op without the
/// `parallel` feature.
pub fn set_exec(exec: Exec) {
    FORCE_SEQUENTIAL.store(exec == Exec::Sequential, Ordering::SeqCst);
}

pub fn current_exec() -> Exec {
    if cfg!(feature = "parallel") && !FORCE_SEQUENTIAL.load(Ordering::SeqCst) {
        Exec::Parallel
    } else {
        Exec::Sequential
    }
}

/// Sizes the worker pool: `1` selects sequential execution, anything larger
/// configures the global rayon pool. Only the first call can size the pool.
pub fn set_threads(n: usize) -> crate::Result<()> {
    if n == 0 {
        return Err(crate::Error::InvalidArgument("thread count must be positive".into()));
    }
    if n == 1 {
        set_exec(Exec::Sequential);
        return Ok(());
    }
    set_exec(Exec::Parallel);
    #[cfg(feature = "parallel")]
    {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("thread pool already initialized: {e}");
        }
    }
    #[cfg(not(feature = "parallel"))]
    log::warn!("built without the `parallel` feature; running sequentially");
    Ok(())
}

/// Applies `f` to consecutive chunks of `items` and returns the results in
/// chunk order.
pub fn map_chunks<T, R, F>(items: &[T], chunk: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(usize, &[T]) -> R + Sync + Send,
{
    let chunk = chunk.max(1);
    #[cfg(feature = "parallel")]
    {
        if current_exec() == Exec::Parallel {
            use rayon::prelude::*;
            return items
                .par_chunks(chunk)
                .enumerate()
                .map(|(i, c)| f(i * chunk, c))
                .collect();
        }
    }
    items.chunks(chunk).enumerate().map(|(i, c)| f(i * chunk, c)).collect()
}

/// Maps over `0..n` one index at a time.
pub fn map_indices<R, F>(n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        if current_exec() == Exec::Parallel {
            use rayon::prelude::*;
            return (0..n).into_par_iter().map(f).collect();
        }
    }
    (0..n).map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chunks_come_back_in_order() {
        let items: Vec<usize> = (0..103).collect();
        let sums = map_chunks(&items, 10, |start, c| (start, c.iter().sum::<usize>()));
        assert_eq!(sums.len(), 11);
        assert_eq!(sums[0], (0, 45));
        assert_eq!(sums[10], (100, 100 + 101 + 102));
        assert_eq!(sums.iter().map(|s| s.1).sum::<usize>(), 102 * 103 / 2);
    }
}
