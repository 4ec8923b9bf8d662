//! Data-parallel helpers. With the `parallel` feature, batch work is spread
//! over the rayon pool; without it, or with [`Exec::Sequential`], the same
//! closures run in order on the calling thread.

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Exec {
    Sequential,
    Parallel,
}

impl Default for Exec {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Exec::Parallel
        } else {
            Exec::Sequential
        }
    }
}

impl Exec {
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Exec::Parallel
    }
}

/// `items.iter().map(f)` collected in order.
pub fn map<T, R, F>(exec: Exec, items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        use rayon::prelude::*;
        return items.par_iter().map(f).collect();
    }
    let _ = exec;
    items.iter().map(f).collect()
}

/// `(0..n).map(f)` collected in order.
pub fn map_range<R, F>(exec: Exec, n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        use rayon::prelude::*;
        return (0..n).into_par_iter().map(f).collect();
    }
    let _ = exec;
    (0..n).map(f).collect()
}

/// Runs `f` inside a pool of `workers` threads when parallel, directly
/// otherwise.
pub fn with_workers<R: Send, F: FnOnce() -> R + Send>(workers: usize, f: F) -> R {
    #[cfg(feature = "parallel")]
    if workers > 0 {
        if let Ok(pool) = rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
            return pool.install(f);
        }
    }
    let _ = workers;
    f()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn both_modes_agree() {
        let xs: Vec<u64> = (0..100).collect();
        let a = map(Exec::Sequential, &xs, |x| x * x);
        let b = map(Exec::Parallel, &xs, |x| x * x);
        assert_eq!(a, b);
        assert_eq!(map_range(Exec::Parallel, 5, |i| i + 1), vec![1, 2, 3, 4, 5]);
    }
}
