//! Optional fan-out over a fixed-size rayon pool. Results always come back in
//! index order, so reductions done by the caller stay deterministic.

use rayon::prelude::*;

use crate::error::{AarmError, Result};

pub struct Workers {
    pool: Option<rayon::ThreadPool>,
}

impl Workers {
    pub fn new(threads: usize) -> Result<Self> {
        if threads <= 1 {
            return Ok(Self::single());
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| AarmError::InvalidArgument(format!("thread pool: {e}")))?;
        Ok(Workers { pool: Some(pool) })
    }

    pub fn single() -> Self {
        Workers { pool: None }
    }

    pub fn threads(&self) -> usize {
        self.pool.as_ref().map_or(1, |p| p.current_num_threads())
    }

    /// `(0..n).map(f)`, possibly in parallel, collected in order.
    pub fn map<R, F>(&self, n: usize, f: F) -> Vec<R>
    where
        R: Send,
        F: Fn(usize) -> R + Sync + Send,
    {
        match &self.pool {
            Some(pool) => pool.install(|| (0..n).into_par_iter().map(f).collect()),
            None => (0..n).map(f).collect(),
        }
    }
}
