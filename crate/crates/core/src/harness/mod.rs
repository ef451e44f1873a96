//! Run configuration, file formats and experiment drivers.

pub mod config;
pub mod experiments;
pub mod io;
pub mod manufactured;

pub use config::{ConfigError, Experiment, InitialSpec, RunConfig};
pub use experiments::{
    run_accuracy, run_conservation, run_evolution, run_groundstate, AccuracyStudy, ConvergenceRow,
    ConvergenceTable, ErrorColumn, HarnessError,
};
pub use io::{Checkpoint, DensitySnapshot, FileError};
pub use manufactured::{manufactured_solution, ManufacturedParams};
