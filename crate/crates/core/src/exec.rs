//! Sequential or rayon-backed evaluation of independent jobs.
//!
//! Results always come back in index order, so output never depends on the
//! execution mode. Without the `parallel` feature, [`Execution::Parallel`]
//! falls back to the sequential path.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    Parallel,
}

impl Default for Execution {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Execution::Parallel
        } else {
            Execution::Sequential
        }
    }
}

impl Execution {
    /// Evaluates `job(i)` for `i in 0..n`, returning results ordered by `i`.
    pub fn map<T, F>(self, n: usize, job: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        match self {
            Execution::Sequential => (0..n).map(job).collect(),
            Execution::Parallel => parallel_map(n, job),
        }
    }
}

#[cfg(feature = "parallel")]
fn parallel_map<T, F>(n: usize, job: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    (0..n).into_par_iter().map(job).collect()
}

#[cfg(not(feature = "parallel"))]
fn parallel_map<T, F>(n: usize, job: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..n).map(job).collect()
}
