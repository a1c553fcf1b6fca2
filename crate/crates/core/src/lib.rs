//! Multi-output feed-forward networks trained by particle swarm optimization
//! (and a gradient-descent baseline), with an experiment harness that trains
//! and compares several model configurations on harvester performance data.
//!
//! Modules, bottom-up:
//!
//! - [`network`]: sigmoid MLP, forward pass, flat parameter layout.
//! - [`pso`]: global-best particle swarm optimizer.
//! - [`trainers`]: swarm and backprop training of a network, model files.
//! - [`metrics`]: RMSE, MAE, `R` and Pearson `r`, comparison tables.
//! - [`dataset`]: ingestion, synthetic factorial data, normalization, splits.
//! - [`experiment`]: configuration, end-to-end runs, report files.
//!
//! Data-parallel loops go through [`par::Execution`]; with the default
//! `parallel` feature they use rayon, and results are identical either way.

pub mod dataset;
pub mod error;
pub mod experiment;
pub mod metrics;
pub mod network;
pub mod par;
pub mod pso;
pub mod trainers;

pub use error::{Error, Result};
pub use network::{NetworkSpec, ParameterVector};
pub use par::Execution;
pub use pso::PsoConfig;
pub use trainers::{BackpropConfig, Method, TrainObjective, TrainedModel};
