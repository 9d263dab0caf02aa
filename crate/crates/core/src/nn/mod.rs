//! Feedforward networks, analytic gradients and the Adam optimizer.

mod adam;
mod network;
mod record;

pub use adam::{AdamConfig, AdamState, Direction};
pub use network::{two_hidden_layers, Activation, ForwardCache, Gradients, LayerSpec, MlpNetwork};
pub use record::{AdamRecord, NetworkRecord};
