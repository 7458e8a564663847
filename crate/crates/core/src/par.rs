//! Execution strategy for data-parallel inner loops.
//!
//! Every parallel path has a sequential twin that yields bitwise-identical
//! output; callers pick one explicitly or take [`Execution::default`].

/// How a data-parallel loop is executed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    /// Runs on the rayon global pool when the `parallel` feature is enabled,
    /// otherwise falls back to [`Execution::Sequential`].
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
    /// True when this strategy will actually fan out work.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel
    }

    /// Sorts with a comparator that defines a total order. Stable in both modes.
    pub fn sort_by<T, F>(self, items: &mut [T], cmp: F)
    where
        T: Send,
        F: Fn(&T, &T) -> std::cmp::Ordering + Sync,
    {
        #[cfg(feature = "parallel")]
        if self.is_parallel() {
            use rayon::slice::ParallelSliceMut;
            items.par_sort_by(cmp);
            return;
        }
        items.sort_by(cmp);
    }

    /// Maps over a slice, preserving order.
    pub fn map<T, R, F>(self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self.is_parallel() {
            use rayon::prelude::*;
            return items.par_iter().map(f).collect();
        }
        items.iter().map(f).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strategies_agree() {
        let data: Vec<i64> = (0..10_000).map(|i| (i * 7919) % 1013 - 500).collect();
        let mut a = data.clone();
        let mut b = data.clone();
        Execution::Sequential.sort_by(&mut a, |x, y| x.cmp(y));
        Execution::Parallel.sort_by(&mut b, |x, y| x.cmp(y));
        assert_eq!(a, b);
        assert_eq!(
            Execution::Sequential.map(&data, |x| x * 2),
            Execution::Parallel.map(&data, |x| x * 2)
        );
    }
}
