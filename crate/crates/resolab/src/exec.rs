use rayon::prelude::*;
use rayon::{ThreadPool, ThreadPoolBuildError, ThreadPoolBuilder};
use resolab_core::exec::Executor;

/// Order-preserving parallel map on a private rayon pool.
pub struct Rayon {
    pool: ThreadPool,
}

impl Rayon {
    /// `threads = 0` lets rayon pick the number of threads.
    pub fn new(threads: usize) -> Result<Self, ThreadPoolBuildError> {
        Ok(Rayon {
            pool: ThreadPoolBuilder::new().num_threads(threads).build()?,
        })
    }
}

impl Executor for Rayon {
    fn map<T, R, F>(&self, items: Vec<T>, f: F) -> Vec<R>
    where
        T: Send,
        R: Send,
        F: Fn(T) -> R + Sync + Send,
    {
        self.pool.install(|| items.into_par_iter().map(f).collect())
    }

    fn threads(&self) -> usize {
        self.pool.current_num_threads()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keeps_input_order() {
        let exec = Rayon::new(3).unwrap();
        let out = exec.map((0..200).collect(), |i: u64| i * i);
        assert_eq!(out, (0..200).map(|i| i * i).collect::<Vec<_>>());
        assert_eq!(exec.threads(), 3);
    }
}
