//! Data-parallel map with a sequential fallback.
//!
//! All heavy sweeps in this crate (θ-grid eigensolves, Monte-Carlo sampling,
//! randomized certification suites) are embarrassingly parallel maps over
//! independent inputs. With the `parallel` feature (default) they run on the
//! rayon thread pool; without it they run sequentially. Both paths produce
//! identical output: results are collected in input order and every reduction
//! downstream is a sequential fold, so float summation order never depends on
//! scheduling.

/// Map `f` over `items`, in parallel when the `parallel` feature is enabled.
///
/// Output order matches input order on both paths.
#[cfg(feature = "parallel")]
pub fn maybe_par_map<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    use rayon::prelude::*;
    items.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn maybe_par_map<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    items.iter().map(f).collect()
}

/// Always-sequential map with the same signature, kept for benchmarking the
/// parallel path against a like-for-like baseline.
pub fn seq_map<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    F: Fn(&T) -> U,
{
    items.iter().map(f).collect()
}

/// Cap the rayon pool width. No-op without the `parallel` feature or if a
/// global pool was already installed.
pub fn limit_threads(n: usize) {
    #[cfg(feature = "parallel")]
    {
        if n > 0 {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = n;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn par_and_seq_agree_in_order() {
        let xs: Vec<u64> = (0..1000).collect();
        let a = maybe_par_map(&xs, |x| x * x + 1);
        let b = seq_map(&xs, |x| x * x + 1);
        assert_eq!(a, b);
    }
}
