//! Configuration, interchange formats and the Monte Carlo experiment driver.

pub mod config;
pub mod experiment;
pub mod histogram;
pub mod io;

pub use config::{Estimator, ExperimentConfig, Metric, Scenario, SpectrumSource};
pub use experiment::{run_experiment, write_outputs, EstimatorSummary, ExperimentResult, TrialRecord};
pub use histogram::{emit_histogram, Histogram};
pub use io::{read_complex_matrix, read_matrix, write_complex_matrix, write_matrix};
