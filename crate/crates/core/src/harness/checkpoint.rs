use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::agent::{Agent, AgentRecord};
use crate::error::{Error, Result};
use crate::harness::config::{ExperimentConfig, PartnerKind};
use crate::agent::Mode;

pub const CHECKPOINT_VERSION: u32 = 1;

/// Everything needed to evaluate or resume a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub config: ExperimentConfig,
    pub seed: u64,
    /// One record per learner: the composite agent, agents 1 and 2, or agent 1
    /// alone against a scripted partner.
    pub agents: Vec<AgentRecord>,
    /// Environment steps taken, prefill included.
    pub env_steps: u64,
    /// Updates applied to each learner.
    pub update_counts: Vec<u64>,
}

/// Learner count implied by a configuration.
pub fn learner_count(config: &ExperimentConfig) -> usize {
    match (config.mode, config.partner) {
        (Mode::DecentralizedAenTd3, PartnerKind::Learned) => 2,
        _ => 1,
    }
}

impl Checkpoint {
    pub fn from_agents(
        config: &ExperimentConfig,
        seed: u64,
        agents: &[&Agent],
        env_steps: u64,
        update_counts: Vec<u64>,
    ) -> Self {
        Self {
            version: CHECKPOINT_VERSION,
            config: config.clone(),
            seed,
            agents: agents.iter().map(|a| a.to_record()).collect(),
            env_steps,
            update_counts,
        }
    }

    /// Checks that the stored learners fit the stored configuration.
    pub fn validate(&self) -> Result<()> {
        if self.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported checkpoint version {}",
                self.version
            )));
        }
        self.config.validate()?;
        let expected = learner_count(&self.config);
        if self.agents.len() != expected || self.update_counts.len() != expected {
            return Err(Error::Checkpoint(format!(
                "expected {expected} learner records, found {}",
                self.agents.len()
            )));
        }
        let layout = self.config.agent_layout();
        for (i, rec) in self.agents.iter().enumerate() {
            if rec.mode != self.config.mode || rec.layout != layout {
                return Err(Error::Checkpoint(format!(
                    "learner {} layout does not match the configuration",
                    i + 1
                )));
            }
        }
        Ok(())
    }

    pub fn restore_agents(&self) -> Result<Vec<Agent>> {
        self.validate()?;
        self.agents.iter().map(Agent::from_record).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("checkpoint always serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ckpt: Self =
            serde_json::from_str(text).map_err(|e| Error::Checkpoint(e.to_string()))?;
        ckpt.validate()?;
        Ok(ckpt)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}
