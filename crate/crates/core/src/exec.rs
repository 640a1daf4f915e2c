//! Order-preserving batch execution.
//!
//! With the `parallel` feature, [`Exec::Parallel`] fans work out over the
//! rayon pool; otherwise every strategy runs sequentially. Results come back
//! in index order either way, so aggregates are identical across strategies.

use serde::Serialize;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Exec {
    Sequential,
    #[default]
    Parallel,
}

impl Exec {
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Exec::Parallel
    }

    /// Computes `f(0), ..., f(n - 1)` and returns them in order.
    pub fn map_indexed<T, F>(self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self == Exec::Parallel {
            use rayon::prelude::*;
            return (0..n).into_par_iter().map(f).collect();
        }
        (0..n).map(f).collect()
    }

    /// Maps over a slice, keeping order.
    pub fn map_slice<I, T, F>(self, items: &[I], f: F) -> Vec<T>
    where
        I: Sync,
        T: Send,
        F: Fn(&I) -> T + Sync + Send,
    {
        self.map_indexed(items.len(), |i| f(&items[i]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strategies_agree() {
        let f = |i: usize| (i as f64).sqrt().to_bits();
        assert_eq!(
            Exec::Sequential.map_indexed(1000, f),
            Exec::Parallel.map_indexed(1000, f)
        );
    }

    #[test]
    fn empty_batch() {
        assert!(Exec::Parallel.map_indexed(0, |i| i).is_empty());
    }
}
