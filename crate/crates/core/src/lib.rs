//! Simulation and inference for continuously monitored open quantum systems.
//!
//! Photon-counting and homodyne records are generated from the conditioned
//! master equation, replayed to obtain exact log-likelihoods and parameter
//! scores, and combined with priors for grid or Metropolis-Hastings posteriors.

pub mod bayes;
pub mod error;
pub mod fisher;
pub mod likelihood;
pub mod models;
pub mod propagator;
pub mod quantum;
pub mod record;
pub mod trajectory;

pub use error::{Error, Result};
pub use models::{BimodalModel, ParameterVector, ParametricModel, StaticModel, TwoLevelModel};
pub use propagator::{FilterState, NoClickPowers, Propagator, StepInput};
pub use quantum::matrix::{ComplexMatrix, C64};
pub use quantum::{DensityMatrix, OperatorSet, UnnormalizedState};
pub use record::{DiffusionRecord, JumpRecord, MeasurementKind, Record};

/// Environment variable overriding the worker thread count.
pub const THREADS_ENV: &str = "QTRAJ_THREADS";

/// Runs `f` on a thread pool sized by [`THREADS_ENV`] when it is set, or on
/// the global pool otherwise. Results do not depend on the thread count.
pub fn with_thread_pool<R: Send>(f: impl FnOnce() -> R + Send) -> R {
    match std::env::var(THREADS_ENV).ok().and_then(|v| v.parse::<usize>().ok()) {
        Some(n) if n > 0 => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(f),
            Err(e) => {
                log::warn!("could not build a {n}-thread pool ({e}); using the global pool");
                f()
            }
        },
        _ => f(),
    }
}
