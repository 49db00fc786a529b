//! Simulation and statistical verification of the minimum-eviction memory
//! process: uniforms arrive one at a time, and an arrival larger than the
//! current minimum of the memory evicts that minimum.

pub mod cli;
pub mod engine;
pub mod error;
pub mod montecarlo;
pub mod observables;
pub mod oracle;
pub mod stats;
pub mod theory;

pub use engine::{run_path, uniform_stream, ProcessState, RunConfig, StepEffect};
pub use error::{ConfigError, Error, Result};
pub use observables::{ObservableRecord, Observables};
pub use stats::EnsembleSummary;
pub use theory::{TheoryModel, Z0};
