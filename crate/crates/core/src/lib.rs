//! Ensemble-based federated learning at desk scale.
//!
//! Clients hold stratified shards of a labeled dataset, train a small
//! ensemble of heterogeneous classifiers (linear, MLP, CNN) that predicts by
//! majority vote, and send flat parameter vectors to a server. The server
//! averages them per architecture, weighted by client sample counts, and
//! broadcasts the resulting global ensemble back.

pub mod cli;
pub mod data;
pub mod ensemble;
pub mod error;
pub mod federation;
pub mod metrics;
pub mod models;
pub mod numerics;

pub use error::{Error, Result};
