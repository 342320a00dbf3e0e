//! Thread pool and wall clock for the core training loop.

use std::time::Instant;

use rayon::prelude::*;
use safeshield_core::shac::{Clock, LaneExecutor};

use crate::error::{BenchError, Result};

/// Environment variable capping the number of worker threads.
pub const THREADS_VAR: &str = "SAFESHIELD_THREADS";

/// Thread count from `SAFESHIELD_THREADS`, or `None` to let rayon decide.
pub fn threads_from_env() -> Result<Option<usize>> {
    match std::env::var(THREADS_VAR) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(BenchError::Config(format!(
                "{THREADS_VAR} must be a positive integer, got {v:?}"
            ))),
        },
        Err(std::env::VarError::NotPresent) => Ok(None),
        Err(e) => Err(BenchError::Config(format!("{THREADS_VAR}: {e}"))),
    }
}

pub fn thread_pool(threads: Option<usize>) -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        b = b.num_threads(n);
    }
    b.build().map_err(|e| BenchError::Config(format!("thread pool: {e}")))
}

/// Runs lanes on a rayon pool. Results keep lane order, so training stays deterministic.
pub struct RayonExecutor {
    pool: rayon::ThreadPool,
}

impl RayonExecutor {
    pub fn new(threads: Option<usize>) -> Result<Self> {
        Ok(RayonExecutor {
            pool: thread_pool(threads)?,
        })
    }

    pub fn from_env() -> Result<Self> {
        Self::new(threads_from_env()?)
    }

    pub fn threads(&self) -> usize {
        self.pool.current_num_threads()
    }
}

impl LaneExecutor for RayonExecutor {
    fn map<T: Send, F: Fn(usize) -> T + Sync>(&self, n: usize, f: F) -> Vec<T> {
        if self.pool.current_num_threads() == 1 {
            return (0..n).map(f).collect();
        }
        self.pool.install(|| {
            let f = &f;
            (0..n).into_par_iter().map(f).collect()
        })
    }
}

/// Seconds since construction.
pub struct StdClock(Instant);

impl StdClock {
    pub fn start() -> Self {
        StdClock(Instant::now())
    }
}

impl Clock for StdClock {
    fn seconds(&self) -> f64 {
        self.0.elapsed().as_secs_f64()
    }
}
