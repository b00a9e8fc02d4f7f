//! Execution strategy for data-parallel loops.
//!
//! With the `parallel` feature (default) [`Exec::Parallel`] maps over
//! rayon's global pool. Without it, both variants run sequentially. Results
//! are always returned in index order.

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Exec {
    #[cfg_attr(feature = "parallel", default)]
    Parallel,
    #[cfg_attr(not(feature = "parallel"), default)]
    Sequential,
}

impl Exec {
    /// `(0..n).map(f)` collected in index order.
    pub fn map_range<T, F>(self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        match self {
            #[cfg(feature = "parallel")]
            Exec::Parallel => {
                use rayon::prelude::*;
                (0..n).into_par_iter().map(f).collect()
            }
            _ => (0..n).map(f).collect(),
        }
    }

    /// `items.iter().map(f)` collected in order.
    pub fn map_slice<I, T, F>(self, items: &[I], f: F) -> Vec<T>
    where
        I: Sync,
        T: Send,
        F: Fn(&I) -> T + Sync + Send,
    {
        match self {
            #[cfg(feature = "parallel")]
            Exec::Parallel => {
                use rayon::prelude::*;
                items.par_iter().map(f).collect()
            }
            _ => items.iter().map(f).collect(),
        }
    }
}
