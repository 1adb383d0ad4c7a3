//! Optional data parallelism with order-preserving results.

use rayon::prelude::*;

/// Environment variable capping worker threads; `0` selects serial execution.
pub const THREADS_ENV: &str = "DISC_THREADS";

/// Runs per-item work either inline or on a private thread pool.
///
/// Results always come back in input order, so reductions over them are
/// identical for every thread count.
pub struct Executor {
    pool: Option<rayon::ThreadPool>,
}

impl Executor {
    pub fn serial() -> Self {
        Executor { pool: None }
    }

    /// `0` or `1` thread runs inline.
    pub fn with_threads(threads: usize) -> Self {
        if threads <= 1 {
            return Self::serial();
        }
        match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
            Ok(pool) => Executor { pool: Some(pool) },
            Err(e) => {
                log::warn!("thread pool unavailable ({e}); running serially");
                Self::serial()
            }
        }
    }

    /// Reads [`THREADS_ENV`]; unset or unparsable means all available cores.
    pub fn from_env() -> Self {
        let threads = std::env::var(THREADS_ENV)
            .ok()
            .and_then(|v| v.trim().parse().ok())
            .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
        Self::with_threads(threads)
    }

    pub fn is_serial(&self) -> bool {
        self.pool.is_none()
    }

    pub fn map<T, R, F>(&self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        match &self.pool {
            None => items.iter().map(f).collect(),
            Some(pool) => pool.install(|| items.par_iter().map(f).collect()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_preserved() {
        let items: Vec<u64> = (0..100).collect();
        let a = Executor::serial().map(&items, |x| x * x);
        let b = Executor::with_threads(3).map(&items, |x| x * x);
        assert_eq!(a, b);
        assert!(Executor::with_threads(0).is_serial());
    }
}
