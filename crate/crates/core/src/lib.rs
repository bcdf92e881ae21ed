//! Deep variational implicit processes.
//!
//! A DVIP model stacks layers of implicit-process units. Each layer draws
//! `S` functions from a prior sampler (a Bayesian neural network or a
//! cosine-feature approximation of a GP), summarizes them through their
//! empirical mean and a centred feature map, and models every unit as a
//! Bayesian linear regression on those features. Inputs flow through the
//! stack by sampling, and the model is trained by maximizing an evidence
//! lower bound with Adam.

pub mod autodiff;
pub mod checkpoint;
pub mod config;
pub mod data;
pub mod error;
pub mod layer;
pub mod likelihood;
pub mod metrics;
pub mod model;
pub mod optim;
pub mod params;
pub mod priors;
pub mod rng;
pub mod special;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use tensor::Tensor;
