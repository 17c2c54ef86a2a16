//! Monte Carlo experiment runner: replicated SAA equilibria, distance CDFs,
//! and comparisons against the exponential bounds.

pub mod compare;
pub mod config;
pub mod experiment;

pub use compare::{compare_bounds, compare_frequencies, comparison_csv, empirical_frequency, BoundComparison};
pub use config::{ExperimentConfig, OUTPUT_DIR_ENV};
pub use experiment::{
    cdf_csv, euclidean, quantile, read_results, reference_solution, results_csv, run_experiment, run_replication,
    summary_csv, write_outputs, ExperimentOutcome, Reference, ReplicationResult, ReplicationStatus,
    MAX_FAILURE_RATE,
};
