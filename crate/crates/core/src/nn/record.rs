//! Serializable snapshots of networks and optimizer state.
//!
//! Parameters are stored as flat decimal lists, one weight matrix (row-major)
//! and one bias vector per layer. `serde_json` is built with
//! `float_roundtrip`, so a save/load cycle reproduces every `f64` bit for bit.

use serde::{Deserialize, Serialize};

use super::adam::{AdamConfig, AdamState};
use super::network::{LayerSpec, MlpNetwork};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkRecord {
    pub layers: Vec<LayerSpec>,
    pub output_scale: f64,
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl From<&MlpNetwork> for NetworkRecord {
    fn from(net: &MlpNetwork) -> Self {
        let n = net.layers().len();
        Self {
            layers: net.layers().to_vec(),
            output_scale: net.output_scale(),
            weights: (0..n).map(|k| net.weights(k).to_vec()).collect(),
            biases: (0..n).map(|k| net.biases(k).to_vec()).collect(),
        }
    }
}

impl NetworkRecord {
    pub fn to_network(&self) -> Result<MlpNetwork> {
        MlpNetwork::from_parts(&self.layers, self.output_scale, &self.weights, &self.biases)
            .map_err(|e| Error::Checkpoint(format!("invalid network record: {e}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamRecord {
    pub config: AdamConfig,
    pub step_count: u64,
    pub first_moment: Vec<f64>,
    pub second_moment: Vec<f64>,
}

impl From<&AdamState> for AdamRecord {
    fn from(state: &AdamState) -> Self {
        Self {
            config: state.config,
            step_count: state.step_count(),
            first_moment: state.first_moment().to_vec(),
            second_moment: state.second_moment().to_vec(),
        }
    }
}

impl AdamRecord {
    pub fn to_state(&self, net: &MlpNetwork) -> Result<AdamState> {
        if self.first_moment.len() != net.param_count() {
            return Err(Error::Checkpoint(
                "optimizer moments do not match the network layout".into(),
            ));
        }
        AdamState::from_parts(
            self.config,
            self.first_moment.clone(),
            self.second_moment.clone(),
            self.step_count,
        )
        .map_err(|e| Error::Checkpoint(e.to_string()))
    }
}
