//! Client-parallel executor backed by rayon.

use adept_core::runtime::Executor;
use rayon::prelude::*;

/// Fans clients out over the current rayon pool. `collect` keeps client order, so
/// the server still reduces updates in ascending index.
#[derive(Debug, Clone, Copy, Default)]
pub struct Parallel;

impl Executor for Parallel {
    fn for_each_client<C, T, F>(&self, clients: &mut [C], f: F) -> Vec<T>
    where
        C: Send,
        T: Send,
        F: Fn(usize, &mut C) -> T + Sync,
    {
        clients.par_iter_mut().enumerate().map(|(i, c)| f(i, c)).collect()
    }

    fn map_indices<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync,
    {
        (0..n).into_par_iter().map(&f).collect()
    }
}

/// Runs `f` inside a pool of `threads` workers (`0` means rayon's default).
pub fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T, rayon::ThreadPoolBuildError> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build()?;
    Ok(pool.install(f))
}
