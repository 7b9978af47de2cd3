//! Thread-pool execution of sweep tasks.

use rayon::prelude::*;
use surrogate_core::runner::{Sequential, TaskRunner};

/// Runs tasks on a dedicated rayon pool. Results come back in task order,
/// so outputs do not depend on the number of workers.
pub struct RayonRunner {
    pool: rayon::ThreadPool,
}

impl RayonRunner {
    pub fn new(workers: usize) -> Result<Self, rayon::ThreadPoolBuildError> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers.max(1))
            .thread_name(|i| format!("sweep-{i}"))
            .build()?;
        Ok(Self { pool })
    }

    pub fn workers(&self) -> usize {
        self.pool.current_num_threads()
    }
}

impl TaskRunner for RayonRunner {
    fn run<R, F>(&self, n: usize, f: F) -> Vec<R>
    where
        R: Send,
        F: Fn(usize) -> R + Sync + Send,
    {
        if self.workers() == 1 {
            return Sequential.run(n, f);
        }
        self.pool.install(|| (0..n).into_par_iter().map(&f).collect())
    }
}
