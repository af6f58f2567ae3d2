//! Data-parallel execution with a sequential fallback.
//!
//! Every batch in the crate is expressed as an ordered map over independent
//! items, each carrying its own RNG stream, so the parallel and sequential
//! modes produce bit-identical output. Floating-point reductions always
//! happen sequentially on the collected vector.

use serde::{Deserialize, Serialize};

/// Environment variable capping the worker count of the global pool.
pub const THREADS_ENV: &str = "CONTRACTION_LAB_THREADS";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExecMode {
    /// Uses rayon when the `parallel` feature is enabled, otherwise sequential.
    #[default]
    Parallel,
    Sequential,
}

impl ExecMode {
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == ExecMode::Parallel
    }

    /// Ordered map over `0..n`.
    pub fn map_range<R, F>(self, n: usize, f: F) -> Vec<R>
    where
        R: Send,
        F: Fn(usize) -> R + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self == ExecMode::Parallel {
            use rayon::prelude::*;
            return (0..n).into_par_iter().map(f).collect();
        }
        (0..n).map(f).collect()
    }

    /// Ordered map over a slice.
    pub fn map<T, R, F>(self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self == ExecMode::Parallel {
            use rayon::prelude::*;
            return items.par_iter().map(f).collect();
        }
        items.iter().map(f).collect()
    }
}

/// Configures the global rayon pool from [`THREADS_ENV`]. Returns the cap
/// that was applied, if any. Safe to call more than once.
pub fn init_threads_from_env() -> Option<usize> {
    let cap = std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)?;
    #[cfg(feature = "parallel")]
    {
        // a second build attempt fails harmlessly once the pool exists
        let _ = rayon::ThreadPoolBuilder::new().num_threads(cap).build_global();
    }
    Some(cap)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn modes_agree_and_preserve_order() {
        let par = ExecMode::Parallel.map_range(1000, |i| (i as f64).sqrt());
        let seq = ExecMode::Sequential.map_range(1000, |i| (i as f64).sqrt());
        assert_eq!(par, seq);
        let items: Vec<u64> = (0..257).collect();
        assert_eq!(
            ExecMode::Parallel.map(&items, |&x| x * 3),
            ExecMode::Sequential.map(&items, |&x| x * 3)
        );
    }
}
