use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::agent::{AgentLayout, Hyperparams, InputScaling, Mode};
use crate::env::{EnvConfig, AGENT_DIM, STATE_DIM};
use crate::error::{Error, Result};

/// Who controls the second effector in a decentralized run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PartnerKind {
    /// Both effectors run their own learner.
    Learned,
    /// Agent 2 follows [`crate::env::scripted_partner`]; only agent 1 learns.
    Scripted,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkWidths {
    pub centralized: usize,
    pub decentralized: usize,
}

impl Default for NetworkWidths {
    fn default() -> Self {
        Self {
            centralized: 256,
            decentralized: 128,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    /// Metrics CSV location; `{seed}` and `{mode}` are substituted.
    pub metrics_path: String,
    /// Checkpoint location; `{seed}` and `{mode}` are substituted.
    pub checkpoint_path: String,
    /// Adds a `wall_time_s` column. Off by default because timings break
    /// byte-identical reruns.
    pub record_wall_time: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            metrics_path: "runs/{mode}_seed{seed}.csv".into(),
            checkpoint_path: "runs/{mode}_seed{seed}.json".into(),
            record_wall_time: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub mode: Mode,
    pub partner: PartnerKind,
    pub seeds: Vec<u64>,
    /// Environment steps of uniform-random exploration before learning.
    pub learning_starts: usize,
    /// Feed networks workspace-normalized states and bound-normalized
    /// actions instead of raw environment units.
    pub normalize_inputs: bool,
    pub network_widths: NetworkWidths,
    pub hyperparams: Hyperparams,
    pub env: EnvConfig,
    pub output: OutputConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            mode: Mode::DecentralizedAenTd3,
            partner: PartnerKind::Learned,
            seeds: (0..10).collect(),
            learning_starts: 1_000,
            normalize_inputs: true,
            network_widths: NetworkWidths::default(),
            hyperparams: Hyperparams::default(),
            env: EnvConfig::default(),
            output: OutputConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.hyperparams.validate()?;
        self.env.validate()?;
        if self.seeds.is_empty() {
            return Err(Error::config("at least one seed is required"));
        }
        if self.network_widths.centralized == 0 || self.network_widths.decentralized == 0 {
            return Err(Error::config("network widths must be positive"));
        }
        if self.hyperparams.horizon_t != self.env.horizon {
            return Err(Error::config(format!(
                "hyperparams.horizon_t ({}) differs from env.horizon ({})",
                self.hyperparams.horizon_t, self.env.horizon
            )));
        }
        if self.hyperparams.action_bounds != self.env.action_bounds {
            return Err(Error::config("agent and environment action bounds differ"));
        }
        if self.mode == Mode::CentralizedTd3 && self.partner == PartnerKind::Scripted {
            return Err(Error::config("a scripted partner needs the decentralized mode"));
        }
        Ok(())
    }

    /// Network sizes for the configured mode.
    pub fn agent_layout(&self) -> AgentLayout {
        match self.mode {
            Mode::CentralizedTd3 => AgentLayout {
                own_state_dim: STATE_DIM,
                partner_state_dim: 0,
                own_action_dim: STATE_DIM,
                partner_action_dim: 0,
                hidden_width: self.network_widths.centralized,
            },
            Mode::DecentralizedAenTd3 => AgentLayout {
                own_state_dim: AGENT_DIM,
                partner_state_dim: AGENT_DIM,
                own_action_dim: AGENT_DIM,
                partner_action_dim: AGENT_DIM,
                hidden_width: self.network_widths.decentralized,
            },
        }
    }

    /// Input scaling for learner `agent_index` (1 or 2; the centralized
    /// learner uses 1): each coordinate is mapped onto `[-1, 1]` over its
    /// workspace interval and actions are divided by the action bound.
    pub fn input_scaling(&self, agent_index: usize) -> InputScaling {
        if !self.normalize_inputs {
            return InputScaling::identity();
        }
        let env = &self.env;
        let [zlo, zhi] = env.z_limits;
        let coords = |agent: usize| {
            let [xlo, xhi] = env.x_limits[agent];
            [((xlo + xhi) / 2.0, (xhi - xlo) / 2.0), ((zlo + zhi) / 2.0, (zhi - zlo) / 2.0)]
        };
        let order: Vec<usize> = match (self.mode, agent_index) {
            (Mode::CentralizedTd3, _) | (_, 1) => vec![0, 1],
            _ => vec![1, 0],
        };
        let pairs: Vec<(f64, f64)> = order.into_iter().flat_map(coords).collect();
        InputScaling {
            state_offset: pairs.iter().map(|p| p.0).collect(),
            state_scale: pairs.iter().map(|p| p.1).collect(),
            action_scale: env.action_bounds.magnitude(),
        }
    }

    pub fn mode_label(&self) -> &'static str {
        match (self.mode, self.partner) {
            (Mode::CentralizedTd3, _) => "td3",
            (Mode::DecentralizedAenTd3, PartnerKind::Learned) => "aen_td3",
            (Mode::DecentralizedAenTd3, PartnerKind::Scripted) => "aen_td3_scripted",
        }
    }

    pub fn metrics_path(&self, seed: u64) -> PathBuf {
        self.expand(&self.output.metrics_path, seed)
    }

    pub fn checkpoint_path(&self, seed: u64) -> PathBuf {
        self.expand(&self.output.checkpoint_path, seed)
    }

    fn expand(&self, template: &str, seed: u64) -> PathBuf {
        PathBuf::from(
            template
                .replace("{seed}", &seed.to_string())
                .replace("{mode}", self.mode_label()),
        )
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("experiment config always serializes")
    }
}
