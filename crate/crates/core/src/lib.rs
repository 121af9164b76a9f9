//! Device-aware spiking network training on modeled ferroelectric synapses.

pub mod container;
pub mod data;
pub mod device_model;
mod error;
pub mod experiments;
pub mod optimizer;
pub mod rng;
pub mod snn;
pub mod weight_fabric;

pub use error::{Error, Result};
