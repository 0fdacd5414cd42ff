//! Execution policy for the data-parallel loops (sweeps, blocked Gram
//! reductions, per-variant reports).
//!
//! With the `parallel` feature enabled, [`Execution::Parallel`] dispatches
//! onto the rayon global pool. Without it, every policy runs sequentially.
//! Results are always collected in input order, so reports do not depend on
//! the schedule.

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
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
    /// Whether this policy actually runs on more than one thread.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel
    }

    /// Map `f` over `items`, preserving order.
    pub fn map<T, R, F>(self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self == Execution::Parallel {
            use rayon::prelude::*;
            return items.par_iter().map(f).collect();
        }
        items.iter().map(f).collect()
    }

    /// Map `f` over `0..len`, preserving order.
    pub fn map_range<R, F>(self, len: usize, f: F) -> Vec<R>
    where
        R: Send,
        F: Fn(usize) -> R + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self == Execution::Parallel {
            use rayon::prelude::*;
            return (0..len).into_par_iter().map(f).collect();
        }
        (0..len).map(f).collect()
    }

    /// Maximum of `f` over `0..len`; `f64::NEG_INFINITY` when empty.
    ///
    /// `max` is associative and commutative, so the result is identical for
    /// every schedule.
    pub fn max_range<F>(self, len: usize, f: F) -> f64
    where
        F: Fn(usize) -> f64 + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self == Execution::Parallel {
            use rayon::prelude::*;
            return (0..len)
                .into_par_iter()
                .map(f)
                .reduce(|| f64::NEG_INFINITY, f64::max);
        }
        (0..len).map(f).fold(f64::NEG_INFINITY, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn both_policies_agree() {
        let xs: Vec<u64> = (0..1000).collect();
        let a = Execution::Sequential.map(&xs, |x| x * x);
        let b = Execution::Parallel.map(&xs, |x| x * x);
        assert_eq!(a, b);
        let m1 = Execution::Sequential.max_range(1000, |i| ((i * 7919) % 1013) as f64);
        let m2 = Execution::Parallel.max_range(1000, |i| ((i * 7919) % 1013) as f64);
        assert_eq!(m1, m2);
        assert_eq!(Execution::Parallel.max_range(0, |_| 1.0), f64::NEG_INFINITY);
    }
}
