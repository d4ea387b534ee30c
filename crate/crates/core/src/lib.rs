//! Spike-train level backpropagation for multi-layer spiking networks of
//! leaky integrate-and-fire neurons.

pub mod checkpoint;
pub mod config;
pub mod data;
pub mod error;
pub mod grad;
pub mod lif;
pub mod optim;
pub mod spike;
pub mod spsp;
pub mod topology;
pub mod train;
pub mod verify;

pub use error::{Error, Result};
pub use spike::{NeuronParams, SpikeTrain, TimeGrid};
pub use topology::{Connectivity, LayerKind, LayerSpec, NetworkTopology, Shape};
