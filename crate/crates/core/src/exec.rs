//! Execution settings shared by the decoupled solve paths.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::reservoir::{Backend, ScenarioSolver};

/// How independent solves are executed.
///
/// `jobs == 1` runs sequentially in index order; `jobs == 0` uses the
/// available hardware parallelism. Results never depend on `jobs`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[derive(Default)]
pub struct Exec {
    pub backend: Backend,
    pub jobs: usize,
}


impl Exec {
    pub fn sequential(backend: Backend) -> Self {
        Self { backend, jobs: 1 }
    }

    pub fn solver(&self) -> Box<dyn ScenarioSolver> {
        self.backend.solver()
    }

    /// Runs `f` on a pool of `jobs` workers.
    pub fn install<R: Send>(&self, f: impl FnOnce() -> R + Send) -> Result<R> {
        if self.jobs == 1 {
            return Ok(f());
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.jobs)
            .build()
            .map_err(|e| Error::Solver(format!("thread pool: {e}")))?;
        Ok(pool.install(f))
    }

    /// Order-preserving map over `0..n`, parallel unless `jobs == 1`. Must be
    /// called inside [`Exec::install`] to honour the worker count.
    pub fn map<T: Send>(&self, n: usize, f: impl Fn(usize) -> T + Sync + Send) -> Vec<T> {
        if self.jobs == 1 {
            (0..n).map(f).collect()
        } else {
            (0..n).into_par_iter().map(f).collect()
        }
    }

    /// Map-reduce over `0..n` with an associative, commutative `merge`.
    pub fn map_reduce<A: Send>(
        &self,
        n: usize,
        identity: impl Fn() -> A + Sync + Send,
        fold: impl Fn(A, usize) -> A + Sync + Send,
        merge: impl Fn(A, A) -> A + Sync + Send,
    ) -> A {
        if self.jobs == 1 {
            (0..n).fold(identity(), fold)
        } else {
            (0..n)
                .into_par_iter()
                .fold(&identity, &fold)
                .reduce(&identity, &merge)
        }
    }
}
