//! Data-parallel helpers. With the `parallel` feature the maps fan out over the
//! rayon pool; without it (or with [`Execution::Sequential`]) they run inline.
//! Results are always collected in index order, so outputs do not depend on
//! scheduling.

use std::sync::atomic::{AtomicU8, Ordering};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    Parallel,
}

static MODE: AtomicU8 = AtomicU8::new(1);

/// Process-wide execution mode used by the pipeline.
pub fn execution() -> Execution {
    if cfg!(feature = "parallel") && MODE.load(Ordering::Relaxed) == 1 {
        Execution::Parallel
    } else {
        Execution::Sequential
    }
}

pub fn set_execution(mode: Execution) {
    MODE.store(matches!(mode, Execution::Parallel) as u8, Ordering::Relaxed);
}

/// Configure the global worker pool. Only the first call has an effect.
pub fn init_workers(workers: Option<usize>) {
    #[cfg(feature = "parallel")]
    if let Some(n) = workers {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global();
    }
    #[cfg(not(feature = "parallel"))]
    let _ = workers;
}

/// `(0..n).map(f).collect()`, in parallel when enabled.
pub fn map_range<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    map_range_with(execution(), n, f)
}

pub fn map_range_with<T, F>(mode: Execution, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    match mode {
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            (0..n).into_par_iter().map(f).collect()
        }
        _ => (0..n).map(f).collect(),
    }
}

/// Fallible variant of [`map_range`]; the first error in index order wins.
pub fn try_map_range<T, E, F>(n: usize, f: F) -> Result<Vec<T>, E>
where
    T: Send,
    E: Send,
    F: Fn(usize) -> Result<T, E> + Sync + Send,
{
    map_range(n, f).into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn both_modes_agree() {
        let f = |i: usize| (i as f64).sqrt().sin();
        let a = map_range_with(Execution::Sequential, 1000, f);
        let b = map_range_with(Execution::Parallel, 1000, f);
        assert_eq!(a, b);
    }
}
