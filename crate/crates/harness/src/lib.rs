//! Experiment orchestration for the phaseless inverse Born series library:
//! configuration, cached forward simulations, method dispatch, error tables
//! and the files read by the figure renderer.

pub mod cache;
pub mod compare;
pub mod config;
pub mod error;
pub mod export;
pub mod pipeline;

pub use cache::SimulationCache;
pub use compare::{compare_methods, Comparison};
pub use config::{DetectorKind, ExperimentConfig, ForwardConfig, Method, PotentialKind};
pub use error::{HarnessError, Result};
pub use export::export_report;
pub use pipeline::{run_experiment, ExperimentReport};
