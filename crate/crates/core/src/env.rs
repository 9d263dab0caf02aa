//! Kinematic dual-effector lifting task.
//!
//! Two effectors hold the ends of a rigid beam in the vertical x-z plane.
//! Each control step an agent displaces its effector by `(dx, dz)` metres,
//! clipped to its own workspace box. The shared reward is the beam's mean
//! height minus a weighted absolute tilt, and an episode ends early as soon as
//! the horizontal effector separation drifts more than `delta` from its value
//! at reset.
//!
//! Agent 1 is the left effector (`x < 0`) and agent 2 the right one; the
//! workspace boxes never overlap, so the separation stays positive. The full
//! state vector is `(x1, z1, x2, z2)`.

use std::io::Write;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rl::ActionBounds;

/// Coordinates per effector and actions per agent.
pub const AGENT_DIM: usize = 2;
pub const STATE_DIM: usize = 2 * AGENT_DIM;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    pub horizon: usize,
    /// Allowed deviation of the effector separation from its initial value.
    pub delta: f64,
    pub initial_separation: f64,
    pub start_height: f64,
    /// Height at which the scripted partner stops lifting.
    pub target_height: f64,
    pub action_bounds: ActionBounds,
    /// `[low, high]` x range for agent 1 and agent 2.
    pub x_limits: [[f64; 2]; 2],
    /// `[low, high]` z range shared by both effectors.
    pub z_limits: [f64; 2],
    pub reward_angle_weight: f64,
    /// Half-width of the uniform perturbation applied to each reset coordinate.
    pub reset_noise: f64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            horizon: 200,
            delta: 0.02,
            initial_separation: 0.4,
            start_height: 0.5,
            target_height: 1.4,
            action_bounds: ActionBounds {
                low: -0.04,
                high: 0.04,
            },
            x_limits: [[-0.6, -0.05], [0.05, 0.6]],
            z_limits: [0.0, 1.5],
            reward_angle_weight: 1.0,
            reset_noise: 0.0,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        self.action_bounds.validate()?;
        let positive = [
            ("delta", self.delta),
            ("initial_separation", self.initial_separation),
            ("target_height", self.target_height),
            ("reward_angle_weight", self.reward_angle_weight),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.horizon == 0 {
            return Err(Error::config("horizon must be positive"));
        }
        if self.delta >= self.initial_separation {
            return Err(Error::config("delta must be smaller than the initial separation"));
        }
        if !(self.reset_noise >= 0.0 && self.reset_noise.is_finite()) {
            return Err(Error::config("reset_noise must be non-negative"));
        }
        let [zlo, zhi] = self.z_limits;
        if !(zlo < zhi) {
            return Err(Error::config("z limits must satisfy low < high"));
        }
        if !(self.target_height > zlo && self.target_height <= zhi) {
            return Err(Error::config("target height must lie inside the workspace"));
        }
        let [[l1, h1], [l2, h2]] = self.x_limits;
        if !(l1 < h1 && l2 < h2 && h1 < l2) {
            return Err(Error::config(
                "x limits must be ordered and keep agent 1 strictly left of agent 2",
            ));
        }
        let start = self.start_positions();
        let n = self.reset_noise;
        for (agent, p) in start.iter().enumerate() {
            let [lo, hi] = self.x_limits[agent];
            if p[0] - n < lo || p[0] + n > hi || p[1] - n < zlo || p[1] + n > zhi {
                return Err(Error::config(format!(
                    "start position of agent {} (plus reset noise) leaves the workspace",
                    agent + 1
                )));
            }
        }
        Ok(())
    }

    /// Nominal reset pose: symmetric about `x = 0` at `start_height`.
    pub fn start_positions(&self) -> [[f64; 2]; 2] {
        let half = 0.5 * self.initial_separation;
        [[-half, self.start_height], [half, self.start_height]]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DoneReason {
    Running,
    HorizonReached,
    SafetyTermination,
}

impl DoneReason {
    pub fn as_str(self) -> &'static str {
        match self {
            DoneReason::Running => "Running",
            DoneReason::HorizonReached => "HorizonReached",
            DoneReason::SafetyTermination => "SafetyTermination",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "Running" => Ok(DoneReason::Running),
            "HorizonReached" => Ok(DoneReason::HorizonReached),
            "SafetyTermination" => Ok(DoneReason::SafetyTermination),
            other => Err(Error::Parse(format!("unknown done reason {other:?}"))),
        }
    }
}

impl std::fmt::Display for DoneReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvState {
    /// `(x, z)` of agent 1 and agent 2; the beam endpoints coincide with them.
    pub positions: [[f64; 2]; 2],
    /// Separation recorded at reset, the reference for the safety rule.
    pub initial_separation: f64,
    pub step_count: usize,
    pub status: DoneReason,
}

impl EnvState {
    pub fn separation(&self) -> f64 {
        self.positions[1][0] - self.positions[0][0]
    }

    pub fn beam_height(&self) -> f64 {
        0.5 * (self.positions[0][1] + self.positions[1][1])
    }

    /// `atan((z1 - z2) / (x2 - x1))`.
    pub fn beam_tilt(&self) -> f64 {
        ((self.positions[0][1] - self.positions[1][1]) / self.separation()).atan()
    }

    pub fn terminated_early(&self) -> bool {
        self.status == DoneReason::SafetyTermination
    }

    pub fn is_done(&self) -> bool {
        self.status != DoneReason::Running
    }

    /// `(x1, z1, x2, z2)`.
    pub fn to_vector(&self) -> Vec<f64> {
        let [[x1, z1], [x2, z2]] = self.positions;
        vec![x1, z1, x2, z2]
    }
}

/// An agent's own effector coordinates and its partner's.
#[derive(Debug, Clone, PartialEq)]
pub struct StatePartition {
    pub own: Vec<f64>,
    pub partner: Vec<f64>,
}

impl StatePartition {
    /// `(own, partner)`; for agent 1 this is the full state vector.
    pub fn concat(&self) -> Vec<f64> {
        let mut v = self.own.clone();
        v.extend_from_slice(&self.partner);
        v
    }
}

/// Splits the state from the point of view of agent `agent_index` (1 or 2).
pub fn state_partition(state: &EnvState, agent_index: usize) -> Result<StatePartition> {
    let (own, partner) = match agent_index {
        1 => (0, 1),
        2 => (1, 0),
        other => {
            return Err(Error::Precondition(format!(
                "agent index must be 1 or 2, got {other}"
            )))
        }
    };
    Ok(StatePartition {
        own: state.positions[own].to_vec(),
        partner: state.positions[partner].to_vec(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub next_state: EnvState,
    pub reward: f64,
    pub done: bool,
    pub done_reason: DoneReason,
}

pub fn reward_fn(state: &EnvState, config: &EnvConfig) -> f64 {
    state.beam_height() - config.reward_angle_weight * state.beam_tilt().abs()
}

/// Ground-truth partner used to measure estimation error: agent 2 lifts
/// straight up at full speed until its effector reaches `target_height`, then
/// holds still.
pub fn scripted_partner(state: &EnvState, config: &EnvConfig) -> Vec<f64> {
    if state.positions[1][1] < config.target_height {
        vec![0.0, config.action_bounds.high]
    } else {
        vec![0.0, 0.0]
    }
}

#[derive(Debug, Clone)]
pub struct LiftEnv {
    config: EnvConfig,
}

impl LiftEnv {
    pub fn new(config: EnvConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self { config })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn reset<R: Rng + ?Sized>(&self, rng: &mut R) -> EnvState {
        let mut positions = self.config.start_positions();
        let n = self.config.reset_noise;
        if n > 0.0 {
            let dist = Uniform::new_inclusive(-n, n).expect("validated noise range");
            for p in positions.iter_mut() {
                p[0] += dist.sample(rng);
                p[1] += dist.sample(rng);
            }
        }
        EnvState {
            initial_separation: positions[1][0] - positions[0][0],
            positions,
            step_count: 0,
            status: DoneReason::Running,
        }
    }

    pub fn step(&self, state: &EnvState, actions: [&[f64]; 2]) -> Result<StepResult> {
        if state.is_done() {
            return Err(Error::State(format!(
                "episode already finished ({})",
                state.status
            )));
        }
        let cfg = &self.config;
        let mut positions = state.positions;
        for (agent, action) in actions.iter().enumerate() {
            if action.len() != AGENT_DIM {
                return Err(Error::shape(format!(
                    "agent {} action has {} components, expected {AGENT_DIM}",
                    agent + 1,
                    action.len()
                )));
            }
            let [xlo, xhi] = cfg.x_limits[agent];
            let [zlo, zhi] = cfg.z_limits;
            let dx = cfg.action_bounds.clamp(action[0]);
            let dz = cfg.action_bounds.clamp(action[1]);
            positions[agent][0] = (positions[agent][0] + dx).clamp(xlo, xhi);
            positions[agent][1] = (positions[agent][1] + dz).clamp(zlo, zhi);
        }
        let step_count = state.step_count + 1;
        let mut next = EnvState {
            positions,
            initial_separation: state.initial_separation,
            step_count,
            status: DoneReason::Running,
        };
        let reward = reward_fn(&next, cfg);
        next.status = if (next.separation() - next.initial_separation).abs() > cfg.delta {
            DoneReason::SafetyTermination
        } else if step_count >= cfg.horizon {
            DoneReason::HorizonReached
        } else {
            DoneReason::Running
        };
        Ok(StepResult {
            done: next.is_done(),
            done_reason: next.status,
            next_state: next,
            reward,
        })
    }
}

/// One row of an exported episode trace.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub step: usize,
    pub positions: [[f64; 2]; 2],
    pub reward: f64,
    pub done_reason: DoneReason,
}

impl TraceRow {
    pub fn from_step(result: &StepResult) -> Self {
        Self {
            step: result.next_state.step_count,
            positions: result.next_state.positions,
            reward: result.reward,
            done_reason: result.done_reason,
        }
    }
}

/// Writes `step,x1,z1,x2,z2,reward,done_reason` rows.
pub fn write_trace_csv(path: &Path, rows: &[TraceRow]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(w, "step,x1,z1,x2,z2,reward,done_reason").map_err(io)?;
    for r in rows {
        let [[x1, z1], [x2, z2]] = r.positions;
        writeln!(
            w,
            "{},{x1},{z1},{x2},{z2},{},{}",
            r.step, r.reward, r.done_reason
        )
        .map_err(io)?;
    }
    w.flush().map_err(io)
}
