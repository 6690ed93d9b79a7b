//! Distributed fractional Bayesian learning coupled with distributed
//! gradient descent over a gossip network.

pub mod acceptance;
pub mod belief;
pub mod descent;
pub mod engine;
pub mod error;
pub mod graph;
pub mod model;
pub mod numfmt;
pub mod presets;
pub mod registry;
pub mod rng;

pub use error::{Error, Result};
