//! Data-parallel map over independent jobs.
//!
//! With the `parallel` feature the map runs on a rayon pool; without it,
//! or with `Execution::Sequential`, it is a plain iterator. Output order
//! always matches input order, so results do not depend on scheduling.

/// Environment variable capping the worker count.
pub const THREADS_ENV: &str = "TUNNELSCOPE_THREADS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Sequential,
    #[default]
    Parallel,
}

/// Worker cap from `TUNNELSCOPE_THREADS`, if set to a positive integer.
pub fn thread_cap() -> Option<usize> {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|s| s.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
}

/// Install the global pool according to `TUNNELSCOPE_THREADS`. Later calls
/// are no-ops.
pub fn init_from_env() {
    #[cfg(feature = "parallel")]
    if let Some(n) = thread_cap() {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

pub fn map<T, R, F>(exec: Execution, items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(usize, &T) -> R + Sync + Send,
{
    match exec {
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            items.par_iter().enumerate().map(|(i, t)| f(i, t)).collect()
        }
        _ => items.iter().enumerate().map(|(i, t)| f(i, t)).collect(),
    }
}

/// `map` over `0..n`.
pub fn map_range<R, F>(exec: Execution, n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    let idx: Vec<usize> = (0..n).collect();
    map(exec, &idx, |_, &i| f(i))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_matches_sequential() {
        let xs: Vec<u64> = (0..1000).collect();
        let f = |i: usize, x: &u64| x * x + i as u64;
        assert_eq!(map(Execution::Parallel, &xs, f), map(Execution::Sequential, &xs, f));
    }

    #[test]
    fn range_map() {
        assert_eq!(map_range(Execution::Parallel, 5, |i| i * 2), vec![0, 2, 4, 6, 8]);
    }
}
