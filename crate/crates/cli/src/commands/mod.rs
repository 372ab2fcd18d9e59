mod bench;
mod equiv;
mod grad;
mod stability;
mod stream;
mod train;

pub use bench::{bench, fit_exponent, run_bench, Exponents, MATRIX_BAND, SCAN_BAND};
pub use equiv::equiv_check;
pub use grad::grad_check;
pub use stability::stability;
pub use stream::stream_check;
pub use train::train;

use anyhow::{Context, Result};
use gfssm_core::{GroupConfig, SeededRng};

/// Whether every checked property held.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum Outcome {
    Pass,
    Fail,
}

impl Outcome {
    pub fn from_pass(pass: bool) -> Self {
        if pass {
            Outcome::Pass
        } else {
            Outcome::Fail
        }
    }
}

/// One seed per instance, drawn in order from the master seed, so results
/// do not depend on how instances are scheduled across threads.
pub(crate) fn instance_seeds(seed: u64, count: usize) -> Vec<u64> {
    let mut master = SeededRng::new(seed);
    (0..count).map(|_| master.next_u64()).collect()
}

pub(crate) fn group_config(q: u64, n: u64) -> Result<GroupConfig> {
    Ok(GroupConfig::new(q as usize, n as usize)?)
}

/// Run `f` over `items` on `jobs` threads, keeping input order.
pub(crate) fn par_map<T: Sync, R: Send>(jobs: u64, items: &[T], f: impl Fn(&T) -> R + Sync) -> Result<Vec<R>> {
    use rayon::prelude::*;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs as usize)
        .build()
        .context("starting worker threads")?;
    Ok(pool.install(|| items.par_iter().map(&f).collect()))
}
