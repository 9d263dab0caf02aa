use serde::{Deserialize, Serialize};

use super::network::{Gradients, MlpNetwork};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamConfig {
    pub fn with_learning_rate(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            ..Self::default()
        }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Minimize,
    /// Gradient ascent, applied as descent on the negated gradient.
    Maximize,
}

/// Adam moments for one network, in that network's parameter layout.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    first_moment: Vec<f64>,
    second_moment: Vec<f64>,
    step_count: u64,
}

impl AdamState {
    pub fn new(net: &MlpNetwork, config: AdamConfig) -> Self {
        Self {
            config,
            first_moment: vec![0.0; net.param_count()],
            second_moment: vec![0.0; net.param_count()],
            step_count: 0,
        }
    }

    pub fn from_parts(
        config: AdamConfig,
        first_moment: Vec<f64>,
        second_moment: Vec<f64>,
        step_count: u64,
    ) -> Result<Self> {
        if first_moment.len() != second_moment.len() {
            return Err(Error::shape("adam moment lengths differ"));
        }
        Ok(Self {
            config,
            first_moment,
            second_moment,
            step_count,
        })
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn first_moment(&self) -> &[f64] {
        &self.first_moment
    }

    pub fn second_moment(&self) -> &[f64] {
        &self.second_moment
    }

    /// One bias-corrected Adam update of `net` in place.
    pub fn step(&mut self, net: &mut MlpNetwork, grads: &Gradients, direction: Direction) -> Result<()> {
        let n = net.param_count();
        if grads.len() != n || self.first_moment.len() != n {
            return Err(Error::shape(format!(
                "adam layout mismatch: {} params, {} gradients, {} moments",
                n,
                grads.len(),
                self.first_moment.len()
            )));
        }
        self.step_count += 1;
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        let t = self.step_count as i32;
        let correction1 = 1.0 - beta1.powi(t);
        let correction2 = 1.0 - beta2.powi(t);
        let sign = match direction {
            Direction::Minimize => 1.0,
            Direction::Maximize => -1.0,
        };
        let params = net.params_mut();
        for (((p, &g), m), v) in params
            .iter_mut()
            .zip(grads.as_slice())
            .zip(self.first_moment.iter_mut())
            .zip(self.second_moment.iter_mut())
        {
            let g = sign * g;
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            let m_hat = *m / correction1;
            let v_hat = *v / correction2;
            *p -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
        }
        Ok(())
    }
}
