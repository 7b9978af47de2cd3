//! Execution of independent tasks; the std companion adds a thread pool.

use alloc::vec::Vec;

/// Maps a task function over indices `0..n`, returning results in index order.
pub trait TaskRunner: Sync {
    fn run<R, F>(&self, n: usize, f: F) -> Vec<R>
    where
        R: Send,
        F: Fn(usize) -> R + Sync + Send;
}

/// Runs tasks one after another on the calling thread.
#[derive(Debug, Clone, Copy, Default)]
pub struct Sequential;

impl TaskRunner for Sequential {
    fn run<R, F>(&self, n: usize, f: F) -> Vec<R>
    where
        R: Send,
        F: Fn(usize) -> R + Sync + Send,
    {
        (0..n).map(f).collect()
    }
}
