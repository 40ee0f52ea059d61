//! Clustered federated learning in which client clusters are inferred by a
//! Dirichlet-process mixture over client model updates.
//!
//! The crate is organised bottom-up:
//!
//! * [`model`] — small softmax classifiers, their gradients and local SGD.
//! * [`partition`] — synthetic label-skewed client datasets with ground truth.
//! * [`dpmm`] — CRP prior, conjugate cluster evidence and the assignment posterior.
//! * [`sampler`] — Gibbs and split-merge MCMC plus an exact enumeration oracle.
//! * [`federation`] — the round loop, aggregation, and fixed-K / global baselines.
//! * [`metrics`] — accuracy, macro-F1, ARI and NMI.

pub mod config;
pub mod dpmm;
pub mod error;
pub mod federation;
pub mod kmeans;
pub mod metrics;
pub mod model;
pub mod partition;
pub mod sampler;
pub mod seed;
pub mod validation;

pub use error::{Error, Result};
