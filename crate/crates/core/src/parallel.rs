//! Order-preserving data-parallel map.
//!
//! With the `parallel` feature and more than one worker, items are processed
//! on a rayon pool; otherwise sequentially. Output order always matches input
//! order, and callers reduce in that order, so results do not depend on the
//! worker count.

/// Number of workers: `0` means "all available".
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Workers(pub usize);

impl Workers {
    pub const SEQUENTIAL: Workers = Workers(1);
    pub const ALL: Workers = Workers(0);

    pub fn is_sequential(self) -> bool {
        self.0 == 1 || !cfg!(feature = "parallel")
    }
}

impl Default for Workers {
    fn default() -> Self {
        Workers::ALL
    }
}

#[cfg(feature = "parallel")]
pub fn map_ordered<T, R, F>(items: Vec<T>, workers: Workers, f: F) -> Vec<R>
where
    T: Send,
    R: Send,
    F: Fn(T) -> R + Send + Sync,
{
    use rayon::prelude::*;
    if workers.is_sequential() || items.len() < 2 {
        return items.into_iter().map(f).collect();
    }
    if workers.0 == 0 {
        return items.into_par_iter().map(f).collect();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(workers.0).build() {
        Ok(pool) => pool.install(|| items.into_par_iter().map(f).collect()),
        Err(_) => items.into_iter().map(f).collect(),
    }
}

#[cfg(not(feature = "parallel"))]
pub fn map_ordered<T, R, F>(items: Vec<T>, _workers: Workers, f: F) -> Vec<R>
where
    T: Send,
    R: Send,
    F: Fn(T) -> R + Send + Sync,
{
    items.into_iter().map(f).collect()
}
