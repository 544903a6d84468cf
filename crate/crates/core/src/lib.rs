//! Simulation and neuroevolution training of integrated optical neural
//! networks built from Mach-Zehnder meshes and electro-optic activations.

pub mod datasets;
pub mod error;
mod fsio;
pub mod ga;
pub mod gradient;
pub mod harness;
pub mod mesh;
pub mod network;
pub mod pso;
pub mod rng;
pub mod train;

pub use error::{Error, Result};
pub use train::{GenerationRecord, Objective, StopReason, TrainResult};
