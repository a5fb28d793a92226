//! Heavy-tailed ensembles, their Gaussian analogues, and the empirical
//! checks built on them.

mod ecdf;
mod experiment;
pub mod lindeberg;
pub mod quadrature;
pub mod rng;
mod spec;

pub use ecdf::{dkw_two_sample_threshold, kolmogorov_distance};
pub use experiment::{
    run_experiment, run_experiment_with, ExperimentOptions, ExperimentResult, StrassenPoint,
    STRASSEN_GRID_POINTS,
};
pub use lindeberg::{lindeberg_decompose, DecomposeMode, Decomposition, SwapTerm};
pub use spec::{
    cholesky, gaussian_analogue, sample_x, Covariance, DistributionSpec, Ensemble, Family, Sampler,
};

/// Runs `op` on a dedicated pool of `workers` threads, or on the global
/// pool when `workers` is `None`.
pub fn with_workers<T: Send>(workers: Option<usize>, op: impl FnOnce() -> T + Send) -> T {
    match workers {
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w.max(1))
            .build()
            .expect("thread pool")
            .install(op),
        None => op(),
    }
}
