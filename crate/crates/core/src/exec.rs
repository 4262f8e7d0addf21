//! Execution mode for batch work.
//!
//! With the `parallel` feature (default) batch operations fan out over rayon's
//! global pool. Without it every mode runs on the calling thread, so call sites
//! never need their own `cfg` switches.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Exec {
    Sequential,
    #[default]
    Parallel,
}

impl Exec {
    /// True when work will actually run on the rayon pool.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Exec::Parallel
    }
}

/// Order-preserving map over a slice.
pub fn map_slice<T, U, F>(exec: Exec, items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        return items.par_iter().map(f).collect();
    }
    let _ = exec;
    items.iter().map(f).collect()
}

/// Order-preserving map over an index range.
pub fn map_range<U, F>(exec: Exec, n: usize, f: F) -> Vec<U>
where
    U: Send,
    F: Fn(usize) -> U + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        return (0..n).into_par_iter().map(f).collect();
    }
    let _ = exec;
    (0..n).map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn both_modes_preserve_order() {
        let v: Vec<u32> = (0..1000).collect();
        let a = map_slice(Exec::Sequential, &v, |x| x * 2);
        let b = map_slice(Exec::Parallel, &v, |x| x * 2);
        assert_eq!(a, b);
        assert_eq!(map_range(Exec::Parallel, 5, |i| i), vec![0, 1, 2, 3, 4]);
    }
}
