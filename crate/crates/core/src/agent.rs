//! TD3 learners with partner action estimation.
//!
//! One update engine serves two configurations:
//!
//! * **Decentralized** (AEN-TD3): the actor sees only the agent's own state
//!   and emits only its own action. An action estimation network (AEN) maps
//!   the partner's state to an estimate of the partner's action, and the twin
//!   critics score `(s, own action, estimated partner action)`.
//! * **Centralized** (plain TD3): one learner sees the full state and emits the
//!   joint action; there is no partner slot and no estimator.
//!
//! States are always stored from the learner's own point of view,
//! `s = (own state, partner state)`, and critic inputs are the concatenation
//! `(own state, partner state, own action, partner action)`.
//!
//! The critic loss and the actor objective use the partner estimate stored
//! with each transition at collection time. Only the estimator update (through
//! the online estimator) and the TD target (through the target estimator)
//! recompute it, unless [`Hyperparams::recompute_partner_estimate`] is set.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{
    two_hidden_layers, Activation, AdamConfig, AdamRecord, AdamState, Direction, Gradients,
    MlpNetwork, NetworkRecord,
};
use crate::rl::{
    clipped_gaussian_noise, gaussian_noise, soft_update, ActionBounds, ReplayBuffer, Transition,
    TransitionDims,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    CentralizedTd3,
    DecentralizedAenTd3,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Hyperparams {
    pub gamma: f64,
    pub tau: f64,
    /// Exploration noise added to executed actions.
    pub explore_sigma: f64,
    /// Smoothing noise added to target-policy actions.
    pub target_sigma: f64,
    /// Clip bound for the smoothing noise.
    pub clip_c: f64,
    /// Critic updates per actor/estimator/target update.
    pub delay_d: usize,
    pub batch_n: usize,
    pub episodes_m: usize,
    pub horizon_t: usize,
    pub action_bounds: ActionBounds,
    pub critic_lr: f64,
    pub actor_lr: f64,
    pub aen_lr: f64,
    pub buffer_capacity: usize,
    pub recompute_partner_estimate: bool,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            tau: 0.005,
            explore_sigma: 0.01,
            target_sigma: 0.01,
            clip_c: 0.02,
            delay_d: 2,
            batch_n: 256,
            episodes_m: 2_000,
            horizon_t: 200,
            action_bounds: ActionBounds {
                low: -0.04,
                high: 0.04,
            },
            critic_lr: 1e-3,
            actor_lr: 1e-4,
            aen_lr: 1e-4,
            buffer_capacity: 1_000_000,
            recompute_partner_estimate: false,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        let open_unit = |name: &str, v: f64| {
            if v > 0.0 && v < 1.0 {
                Ok(())
            } else {
                Err(Error::config(format!("{name} must lie in (0, 1), got {v}")))
            }
        };
        open_unit("gamma", self.gamma)?;
        // tau = 1 is accepted: it degenerates to hard target copies.
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(Error::config(format!("tau must lie in (0, 1], got {}", self.tau)));
        }
        if !(self.explore_sigma >= 0.0 && self.target_sigma >= 0.0) {
            return Err(Error::config("noise scales must be non-negative"));
        }
        if !(self.clip_c > 0.0) {
            return Err(Error::config("clip_c must be positive"));
        }
        for (name, v) in [
            ("delay_d", self.delay_d),
            ("batch_n", self.batch_n),
            ("episodes_m", self.episodes_m),
            ("horizon_t", self.horizon_t),
            ("buffer_capacity", self.buffer_capacity),
        ] {
            if v == 0 {
                return Err(Error::config(format!("{name} must be positive")));
            }
        }
        for (name, v) in [
            ("critic_lr", self.critic_lr),
            ("actor_lr", self.actor_lr),
            ("aen_lr", self.aen_lr),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(format!("{name} must be positive")));
            }
        }
        self.action_bounds.validate()
    }
}

/// Vector sizes seen by one learner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentLayout {
    pub own_state_dim: usize,
    pub partner_state_dim: usize,
    pub own_action_dim: usize,
    pub partner_action_dim: usize,
    pub hidden_width: usize,
}

impl AgentLayout {
    pub fn state_dim(&self) -> usize {
        self.own_state_dim + self.partner_state_dim
    }

    pub fn critic_input_dim(&self) -> usize {
        self.state_dim() + self.own_action_dim + self.partner_action_dim
    }

    pub fn has_estimator(&self) -> bool {
        self.partner_state_dim > 0 && self.partner_action_dim > 0
    }

    pub fn transition_dims(&self) -> TransitionDims {
        TransitionDims {
            state: self.state_dim(),
            own_action: self.own_action_dim,
            partner_action: self.partner_action_dim,
        }
    }

    fn validate(&self, mode: Mode) -> Result<()> {
        if self.own_state_dim == 0 || self.own_action_dim == 0 || self.hidden_width == 0 {
            return Err(Error::config("own state, own action and hidden width must be positive"));
        }
        if (self.partner_state_dim == 0) != (self.partner_action_dim == 0) {
            return Err(Error::config(
                "partner state and partner action dims must both be zero or both positive",
            ));
        }
        if mode == Mode::CentralizedTd3 && self.partner_action_dim != 0 {
            return Err(Error::Mode(
                "a centralized learner has no partner action slot".into(),
            ));
        }
        Ok(())
    }
}

/// Fixed affine map applied to network inputs: state component `k` becomes
/// `(s_k - state_offset[k]) / state_scale[k]` (in the learner's own-view
/// order) and action inputs of the critic are divided by `action_scale`.
/// Stored transitions and emitted actions stay in environment units.
/// Empty state vectors mean no state scaling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputScaling {
    pub state_offset: Vec<f64>,
    pub state_scale: Vec<f64>,
    pub action_scale: f64,
}

impl Default for InputScaling {
    fn default() -> Self {
        Self::identity()
    }
}

impl InputScaling {
    pub fn identity() -> Self {
        Self {
            state_offset: Vec::new(),
            state_scale: Vec::new(),
            action_scale: 1.0,
        }
    }

    pub fn is_identity(&self) -> bool {
        self.state_offset.is_empty() && self.action_scale == 1.0
    }

    fn validate(&self, layout: &AgentLayout) -> Result<()> {
        let n = self.state_offset.len();
        if n != self.state_scale.len() || (n != 0 && n != layout.state_dim()) {
            return Err(Error::config("input scaling does not match the state dimension"));
        }
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if !positive(self.action_scale) || !self.state_scale.iter().all(|&v| positive(v)) {
            return Err(Error::config("input scales must be positive and finite"));
        }
        if !self.state_offset.iter().all(|v| v.is_finite()) {
            return Err(Error::config("input offsets must be finite"));
        }
        Ok(())
    }

    /// Scales row-major rows of width `width` holding state components
    /// `start..start + width`.
    fn states(&self, data: &[f64], start: usize, width: usize) -> Vec<f64> {
        if self.state_offset.is_empty() || width == 0 {
            return data.to_vec();
        }
        let off = &self.state_offset[start..start + width];
        let sc = &self.state_scale[start..start + width];
        data.chunks_exact(width)
            .flat_map(|row| row.iter().zip(off).zip(sc).map(|((v, o), s)| (v - o) / s))
            .collect()
    }

    fn actions(&self, data: &[f64]) -> Vec<f64> {
        if self.action_scale == 1.0 {
            return data.to_vec();
        }
        data.iter().map(|v| v / self.action_scale).collect()
    }
}

/// An online network, its target copy and the online network's optimizer.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackedNetwork {
    pub online: MlpNetwork,
    pub target: MlpNetwork,
    pub optimizer: AdamState,
}

impl TrackedNetwork {
    pub fn new(online: MlpNetwork, adam: AdamConfig) -> Self {
        Self {
            optimizer: AdamState::new(&online, adam),
            target: online.clone(),
            online,
        }
    }

    fn soft_update(&mut self, tau: f64) -> Result<()> {
        soft_update(&mut self.target, &self.online, tau)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackedRecord {
    pub online: NetworkRecord,
    pub target: NetworkRecord,
    pub optimizer: AdamRecord,
}

impl From<&TrackedNetwork> for TrackedRecord {
    fn from(t: &TrackedNetwork) -> Self {
        Self {
            online: (&t.online).into(),
            target: (&t.target).into(),
            optimizer: (&t.optimizer).into(),
        }
    }
}

impl TrackedRecord {
    pub fn restore(&self) -> Result<TrackedNetwork> {
        let online = self.online.to_network()?;
        let target = self.target.to_network()?;
        if !online.same_layout(&target) {
            return Err(Error::Checkpoint("target layout differs from online network".into()));
        }
        let optimizer = self.optimizer.to_state(&online)?;
        Ok(TrackedNetwork {
            online,
            target,
            optimizer,
        })
    }
}

/// The twin critics, the actor and (decentralized only) the estimator.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentNetworks {
    pub critic1: TrackedNetwork,
    pub critic2: TrackedNetwork,
    pub actor: TrackedNetwork,
    pub aen: Option<TrackedNetwork>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentRecord {
    pub mode: Mode,
    pub layout: AgentLayout,
    pub hyperparams: Hyperparams,
    pub critic1: TrackedRecord,
    pub critic2: TrackedRecord,
    pub actor: TrackedRecord,
    pub aen: Option<TrackedRecord>,
    #[serde(default)]
    pub input_scaling: InputScaling,
}

/// TD target together with the quantities it was built from.
#[derive(Debug, Clone, PartialEq)]
pub struct TdTargets {
    pub y: Vec<f64>,
    pub target_q1: Vec<f64>,
    pub target_q2: Vec<f64>,
    /// Row-major smoothed target-policy actions (after clipping).
    pub next_own_actions: Vec<f64>,
    /// Row-major target-estimator partner actions (after clipping).
    pub next_partner_actions: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    pub targets: TdTargets,
    /// Actor, estimator and targets were updated on this step.
    pub policy_updated: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Agent {
    mode: Mode,
    layout: AgentLayout,
    hyper: Hyperparams,
    scaling: InputScaling,
    pub networks: AgentNetworks,
}

/// Row-major gather of a per-transition vector.
fn gather<'a>(batch: &[&'a Transition], field: impl Fn(&'a Transition) -> &'a [f64]) -> Vec<f64> {
    let mut out = Vec::new();
    for t in batch {
        out.extend_from_slice(field(t));
    }
    out
}

/// Concatenates per-row blocks of several row-major matrices.
fn concat_rows(n: usize, parts: &[(&[f64], usize)]) -> Vec<f64> {
    let width: usize = parts.iter().map(|p| p.1).sum();
    let mut out = Vec::with_capacity(n * width);
    for row in 0..n {
        for &(data, w) in parts {
            out.extend_from_slice(&data[row * w..(row + 1) * w]);
        }
    }
    out
}

/// Extracts columns `start..start + w` from a row-major matrix of width `width`.
fn columns(data: &[f64], width: usize, start: usize, w: usize) -> Vec<f64> {
    data.chunks_exact(width)
        .flat_map(|row| row[start..start + w].iter().copied())
        .collect()
}

impl Agent {
    /// Builds a learner with independently initialized networks and targets
    /// equal to their online networks. Initialization order is critic 1,
    /// critic 2, actor, estimator.
    pub fn new<R: Rng + ?Sized>(
        mode: Mode,
        layout: AgentLayout,
        hyper: Hyperparams,
        rng: &mut R,
    ) -> Result<Self> {
        hyper.validate()?;
        layout.validate(mode)?;
        let width = layout.hidden_width;
        let scale = hyper.action_bounds.magnitude();
        let critic_spec = two_hidden_layers(layout.critic_input_dim(), width, 1, Activation::Identity);
        let actor_spec =
            two_hidden_layers(layout.own_state_dim, width, layout.own_action_dim, Activation::Tanh);
        let critic_adam = AdamConfig::with_learning_rate(hyper.critic_lr);
        let critic1 = TrackedNetwork::new(MlpNetwork::new(&critic_spec, 0.0, rng)?, critic_adam);
        let critic2 = TrackedNetwork::new(MlpNetwork::new(&critic_spec, 0.0, rng)?, critic_adam);
        let actor = TrackedNetwork::new(
            MlpNetwork::new(&actor_spec, scale, rng)?,
            AdamConfig::with_learning_rate(hyper.actor_lr),
        );
        let aen = if mode == Mode::DecentralizedAenTd3 && layout.has_estimator() {
            let spec = two_hidden_layers(
                layout.partner_state_dim,
                width,
                layout.partner_action_dim,
                Activation::Tanh,
            );
            Some(TrackedNetwork::new(
                MlpNetwork::new(&spec, scale, rng)?,
                AdamConfig::with_learning_rate(hyper.aen_lr),
            ))
        } else {
            None
        };
        Ok(Self {
            mode,
            layout,
            hyper,
            scaling: InputScaling::identity(),
            networks: AgentNetworks {
                critic1,
                critic2,
                actor,
                aen,
            },
        })
    }

    /// Wraps existing networks, checking that their shapes fit `layout`.
    pub fn from_networks(
        mode: Mode,
        layout: AgentLayout,
        hyper: Hyperparams,
        networks: AgentNetworks,
    ) -> Result<Self> {
        hyper.validate()?;
        layout.validate(mode)?;
        let check = |name: &str, t: &TrackedNetwork, input: usize, output: usize| -> Result<()> {
            if t.online.input_dim() != input
                || t.online.output_dim() != output
                || !t.online.same_layout(&t.target)
                || t.optimizer.first_moment().len() != t.online.param_count()
            {
                return Err(Error::shape(format!("{name} network does not fit the agent layout")));
            }
            Ok(())
        };
        check("critic 1", &networks.critic1, layout.critic_input_dim(), 1)?;
        check("critic 2", &networks.critic2, layout.critic_input_dim(), 1)?;
        check("actor", &networks.actor, layout.own_state_dim, layout.own_action_dim)?;
        match (&networks.aen, mode == Mode::DecentralizedAenTd3 && layout.has_estimator()) {
            (Some(aen), true) => check(
                "estimator",
                aen,
                layout.partner_state_dim,
                layout.partner_action_dim,
            )?,
            (None, false) => {}
            (Some(_), false) => return Err(Error::Mode("unexpected estimator network".into())),
            (None, true) => return Err(Error::Mode("missing estimator network".into())),
        }
        Ok(Self {
            mode,
            layout,
            hyper,
            scaling: InputScaling::identity(),
            networks,
        })
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn layout(&self) -> AgentLayout {
        self.layout
    }

    pub fn hyperparams(&self) -> &Hyperparams {
        &self.hyper
    }

    pub fn set_hyperparams(&mut self, hyper: Hyperparams) -> Result<()> {
        hyper.validate()?;
        self.hyper = hyper;
        Ok(())
    }

    pub fn input_scaling(&self) -> &InputScaling {
        &self.scaling
    }

    pub fn set_input_scaling(&mut self, scaling: InputScaling) -> Result<()> {
        scaling.validate(&self.layout)?;
        self.scaling = scaling;
        Ok(())
    }

    fn own_inputs(&self, own_states: &[f64]) -> Vec<f64> {
        self.scaling.states(own_states, 0, self.layout.own_state_dim)
    }

    fn partner_inputs(&self, partner_states: &[f64]) -> Vec<f64> {
        let l = self.layout;
        self.scaling.states(partner_states, l.own_state_dim, l.partner_state_dim)
    }

    pub fn new_buffer(&self) -> Result<ReplayBuffer> {
        ReplayBuffer::new(self.hyper.buffer_capacity, self.layout.transition_dims())
    }

    fn aen(&self) -> Result<&TrackedNetwork> {
        self.networks
            .aen
            .as_ref()
            .ok_or_else(|| Error::Mode("this learner has no action estimation network".into()))
    }

    /// Policy action for `own_state` plus N(0, sigma^2) noise, clipped to the
    /// action bounds.
    pub fn select_action<R: Rng + ?Sized>(
        &self,
        own_state: &[f64],
        sigma: f64,
        rng: &mut R,
    ) -> Result<Vec<f64>> {
        if own_state.len() != self.layout.own_state_dim {
            return Err(Error::shape("own state does not match the actor input"));
        }
        let mut a = self.networks.actor.online.forward(&self.own_inputs(own_state))?;
        if sigma > 0.0 {
            let noise = gaussian_noise(a.len(), sigma, rng);
            for (v, e) in a.iter_mut().zip(noise) {
                *v += e;
            }
        }
        for v in &mut a {
            *v = self.hyper.action_bounds.clamp(*v);
        }
        Ok(a)
    }

    pub fn estimate_partner_action(&self, partner_state: &[f64]) -> Result<Vec<f64>> {
        let aen = self.aen()?;
        if partner_state.len() != self.layout.partner_state_dim {
            return Err(Error::shape("partner state does not match the estimator input"));
        }
        aen.online.forward(&self.partner_inputs(partner_state))
    }

    /// Partner estimate to store with a transition: the online estimator's
    /// output, or an empty vector for a learner without one.
    pub fn partner_estimate_for_storage(&self, partner_state: &[f64]) -> Result<Vec<f64>> {
        match &self.networks.aen {
            Some(_) => self.estimate_partner_action(partner_state),
            None => Ok(Vec::new()),
        }
    }

    fn split_states(&self, states: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let l = self.layout;
        let own = columns(states, l.state_dim(), 0, l.own_state_dim);
        let partner = if l.partner_state_dim > 0 {
            columns(states, l.state_dim(), l.own_state_dim, l.partner_state_dim)
        } else {
            Vec::new()
        };
        (own, partner)
    }

    fn critic_inputs(&self, n: usize, states: &[f64], own: &[f64], partner: &[f64]) -> Vec<f64> {
        let l = self.layout;
        if self.scaling.is_identity() {
            return concat_rows(
                n,
                &[
                    (states, l.state_dim()),
                    (own, l.own_action_dim),
                    (partner, l.partner_action_dim),
                ],
            );
        }
        let states = self.scaling.states(states, 0, l.state_dim());
        let own = self.scaling.actions(own);
        let partner = self.scaling.actions(partner);
        concat_rows(
            n,
            &[
                (&states, l.state_dim()),
                (&own, l.own_action_dim),
                (&partner, l.partner_action_dim),
            ],
        )
    }

    /// Chain rule through the action scaling of the critic input.
    fn action_input_gradient(&self, grad: Vec<f64>) -> Vec<f64> {
        self.scaling.actions(&grad)
    }

    /// Partner actions fed to the critic loss and the actor objective.
    fn batch_partner_actions(&self, batch: &[&Transition]) -> Result<Vec<f64>> {
        if self.hyper.recompute_partner_estimate {
            if let Some(aen) = &self.networks.aen {
                let states = gather(batch, |t| &t.state);
                let (_, partner) = self.split_states(&states);
                let inputs = self.partner_inputs(&partner);
                return Ok(aen.online.forward_batch(&inputs, batch.len())?.into_output());
            }
        }
        Ok(gather(batch, |t| &t.partner_estimate))
    }

    fn check_batch(&self, batch: &[&Transition]) -> Result<()> {
        if batch.is_empty() {
            return Err(Error::Precondition("empty minibatch".into()));
        }
        let dims = self.layout.transition_dims();
        for t in batch {
            if t.state.len() != dims.state
                || t.next_state.len() != dims.state
                || t.own_action.len() != dims.own_action
                || t.partner_estimate.len() != dims.partner_action
            {
                return Err(Error::shape("transition does not match the agent layout"));
            }
        }
        Ok(())
    }

    pub fn compute_td_target<R: Rng + ?Sized>(
        &self,
        batch: &[&Transition],
        rng: &mut R,
    ) -> Result<Vec<f64>> {
        Ok(self.td_targets(batch, rng)?.y)
    }

    /// `y = r + [not terminated] * gamma * min_j Q'_j(s', clip(pi'(s'_own) + eps), clip(e'(s'_partner)))`
    /// using target networks only.
    pub fn td_targets<R: Rng + ?Sized>(
        &self,
        batch: &[&Transition],
        rng: &mut R,
    ) -> Result<TdTargets> {
        self.check_batch(batch)?;
        let n = batch.len();
        let l = self.layout;
        let bounds = self.hyper.action_bounds;
        let next_states = gather(batch, |t| &t.next_state);
        let (own_next, partner_next) = self.split_states(&next_states);

        let mut next_own = self
            .networks
            .actor
            .target
            .forward_batch(&self.own_inputs(&own_next), n)?
            .into_output();
        let noise = clipped_gaussian_noise(
            n * l.own_action_dim,
            self.hyper.target_sigma,
            self.hyper.clip_c,
            rng,
        );
        for (a, e) in next_own.iter_mut().zip(&noise) {
            *a = bounds.clamp(*a + e);
        }
        let next_partner = match &self.networks.aen {
            Some(aen) => {
                let inputs = self.partner_inputs(&partner_next);
                let mut p = aen.target.forward_batch(&inputs, n)?.into_output();
                for a in &mut p {
                    *a = bounds.clamp(*a);
                }
                p
            }
            None => Vec::new(),
        };
        let inputs = self.critic_inputs(n, &next_states, &next_own, &next_partner);
        let q1 = self.networks.critic1.target.forward_batch(&inputs, n)?.into_output();
        let q2 = self.networks.critic2.target.forward_batch(&inputs, n)?.into_output();
        let gamma = self.hyper.gamma;
        let y = batch
            .iter()
            .zip(q1.iter().zip(&q2))
            .map(|(t, (a, b))| {
                if t.terminated {
                    t.reward
                } else {
                    t.reward + gamma * a.min(*b)
                }
            })
            .collect();
        Ok(TdTargets {
            y,
            target_q1: q1,
            target_q2: q2,
            next_own_actions: next_own,
            next_partner_actions: next_partner,
        })
    }

    /// Gradient of `(1/N) sum (Q_j(s, a, a_o) - y)^2` for critic `which` (1 or 2).
    pub fn critic_gradient(&self, which: usize, batch: &[&Transition], y: &[f64]) -> Result<Gradients> {
        self.check_batch(batch)?;
        if y.len() != batch.len() {
            return Err(Error::shape(format!(
                "{} targets for {} transitions",
                y.len(),
                batch.len()
            )));
        }
        let critic = match which {
            1 => &self.networks.critic1.online,
            2 => &self.networks.critic2.online,
            other => return Err(Error::Precondition(format!("no critic {other}"))),
        };
        let n = batch.len();
        let states = gather(batch, |t| &t.state);
        let own = gather(batch, |t| &t.own_action);
        let partner = self.batch_partner_actions(batch)?;
        let inputs = self.critic_inputs(n, &states, &own, &partner);
        let cache = critic.forward_batch(&inputs, n)?;
        let scale = 2.0 / n as f64;
        let upstream: Vec<f64> = cache
            .output()
            .iter()
            .zip(y)
            .map(|(q, target)| scale * (q - target))
            .collect();
        let mut grads = Gradients::zeros_like(critic);
        critic.backward_batch(&cache, &upstream, Some(&mut grads), false)?;
        Ok(grads)
    }

    /// One Adam step on each critic's mean squared TD error.
    pub fn critic_update(&mut self, batch: &[&Transition], y: &[f64]) -> Result<()> {
        let g1 = self.critic_gradient(1, batch, y)?;
        let g2 = self.critic_gradient(2, batch, y)?;
        let c1 = &mut self.networks.critic1;
        c1.optimizer.step(&mut c1.online, &g1, Direction::Minimize)?;
        let c2 = &mut self.networks.critic2;
        c2.optimizer.step(&mut c2.online, &g2, Direction::Minimize)?;
        Ok(())
    }

    /// Gradient of `(1/N) sum Q_1(s, pi(s_own), a_o)` with respect to the actor.
    pub fn actor_gradient(&self, batch: &[&Transition]) -> Result<Gradients> {
        self.check_batch(batch)?;
        let n = batch.len();
        let l = self.layout;
        let states = gather(batch, |t| &t.state);
        let (own_states, _) = self.split_states(&states);
        let actor = &self.networks.actor.online;
        let actor_cache = actor.forward_batch(&self.own_inputs(&own_states), n)?;
        let partner = self.batch_partner_actions(batch)?;
        let inputs = self.critic_inputs(n, &states, actor_cache.output(), &partner);
        let dq_dinput = self.critic1_input_gradient(&inputs, n)?;
        let dq_da = self.action_input_gradient(columns(
            &dq_dinput,
            l.critic_input_dim(),
            l.state_dim(),
            l.own_action_dim,
        ));
        let mut grads = Gradients::zeros_like(actor);
        actor.backward_batch(&actor_cache, &dq_da, Some(&mut grads), false)?;
        Ok(grads)
    }

    /// One Adam ascent step of the actor on critic 1. Critic parameters are
    /// left untouched.
    pub fn actor_update(&mut self, batch: &[&Transition]) -> Result<()> {
        let g = self.actor_gradient(batch)?;
        let actor = &mut self.networks.actor;
        actor.optimizer.step(&mut actor.online, &g, Direction::Maximize)
    }

    /// Gradient of `(1/N) sum Q_1(s, a, e(s_partner))` with respect to the
    /// estimator, using the stored own actions.
    pub fn aen_gradient(&self, batch: &[&Transition]) -> Result<Gradients> {
        let aen = &self.aen()?.online;
        self.check_batch(batch)?;
        let n = batch.len();
        let l = self.layout;
        let states = gather(batch, |t| &t.state);
        let (_, partner_states) = self.split_states(&states);
        let aen_cache = aen.forward_batch(&self.partner_inputs(&partner_states), n)?;
        let own = gather(batch, |t| &t.own_action);
        let inputs = self.critic_inputs(n, &states, &own, aen_cache.output());
        let dq_dinput = self.critic1_input_gradient(&inputs, n)?;
        let dq_dao = self.action_input_gradient(columns(
            &dq_dinput,
            l.critic_input_dim(),
            l.state_dim() + l.own_action_dim,
            l.partner_action_dim,
        ));
        let mut grads = Gradients::zeros_like(aen);
        aen.backward_batch(&aen_cache, &dq_dao, Some(&mut grads), false)?;
        Ok(grads)
    }

    pub fn aen_update(&mut self, batch: &[&Transition]) -> Result<()> {
        let g = self.aen_gradient(batch)?;
        let aen = self
            .networks
            .aen
            .as_mut()
            .ok_or_else(|| Error::Mode("this learner has no action estimation network".into()))?;
        aen.optimizer.step(&mut aen.online, &g, Direction::Maximize)
    }

    /// `d/d input` of `(1/N) sum Q_1(input)`.
    fn critic1_input_gradient(&self, inputs: &[f64], n: usize) -> Result<Vec<f64>> {
        let critic = &self.networks.critic1.online;
        let cache = critic.forward_batch(inputs, n)?;
        let upstream = vec![1.0 / n as f64; n];
        Ok(critic
            .backward_batch(&cache, &upstream, None, true)?
            .expect("input gradient requested"))
    }

    /// Soft-updates every target network toward its online network.
    pub fn soft_update_targets(&mut self) -> Result<()> {
        let tau = self.hyper.tau;
        let nets = &mut self.networks;
        nets.critic1.soft_update(tau)?;
        nets.critic2.soft_update(tau)?;
        nets.actor.soft_update(tau)?;
        if let Some(aen) = nets.aen.as_mut() {
            aen.soft_update(tau)?;
        }
        Ok(())
    }

    /// Critic update every call; actor, estimator and target updates when
    /// `step_index` is a multiple of the delay.
    pub fn update_on_batch<R: Rng + ?Sized>(
        &mut self,
        batch: &[&Transition],
        step_index: u64,
        rng: &mut R,
    ) -> Result<StepReport> {
        let targets = self.td_targets(batch, rng)?;
        self.critic_update(batch, &targets.y)?;
        let policy_updated = step_index.is_multiple_of(self.hyper.delay_d as u64);
        if policy_updated {
            self.actor_update(batch)?;
            if self.networks.aen.is_some() {
                self.aen_update(batch)?;
            }
            self.soft_update_targets()?;
        }
        Ok(StepReport {
            targets,
            policy_updated,
        })
    }

    /// One decentralized AEN-TD3 update on a minibatch drawn from `buffer`.
    pub fn train_step<R: Rng + ?Sized>(
        &mut self,
        buffer: &ReplayBuffer,
        step_index: u64,
        rng: &mut R,
    ) -> Result<StepReport> {
        if self.mode != Mode::DecentralizedAenTd3 {
            return Err(Error::Mode("train_step expects a decentralized learner".into()));
        }
        self.sampled_update(buffer, step_index, rng)
    }

    /// One centralized TD3 update on a minibatch drawn from `buffer`.
    pub fn centralized_td3_step<R: Rng + ?Sized>(
        &mut self,
        buffer: &ReplayBuffer,
        step_index: u64,
        rng: &mut R,
    ) -> Result<StepReport> {
        if self.mode != Mode::CentralizedTd3 {
            return Err(Error::Mode("centralized_td3_step expects a centralized learner".into()));
        }
        self.sampled_update(buffer, step_index, rng)
    }

    /// Mode-dispatching update used by the training loop.
    pub fn learn<R: Rng + ?Sized>(
        &mut self,
        buffer: &ReplayBuffer,
        step_index: u64,
        rng: &mut R,
    ) -> Result<StepReport> {
        match self.mode {
            Mode::CentralizedTd3 => self.centralized_td3_step(buffer, step_index, rng),
            Mode::DecentralizedAenTd3 => self.train_step(buffer, step_index, rng),
        }
    }

    fn sampled_update<R: Rng + ?Sized>(
        &mut self,
        buffer: &ReplayBuffer,
        step_index: u64,
        rng: &mut R,
    ) -> Result<StepReport> {
        if buffer.dims() != self.layout.transition_dims() {
            return Err(Error::shape("replay buffer dims do not match the agent layout"));
        }
        let batch = buffer.sample(self.hyper.batch_n, rng)?;
        self.update_on_batch(&batch, step_index, rng)
    }

    pub fn to_record(&self) -> AgentRecord {
        let n = &self.networks;
        AgentRecord {
            mode: self.mode,
            layout: self.layout,
            hyperparams: self.hyper.clone(),
            critic1: (&n.critic1).into(),
            critic2: (&n.critic2).into(),
            actor: (&n.actor).into(),
            aen: n.aen.as_ref().map(Into::into),
            input_scaling: self.scaling.clone(),
        }
    }

    pub fn from_record(record: &AgentRecord) -> Result<Self> {
        let networks = AgentNetworks {
            critic1: record.critic1.restore()?,
            critic2: record.critic2.restore()?,
            actor: record.actor.restore()?,
            aen: record.aen.as_ref().map(TrackedRecord::restore).transpose()?,
        };
        let mut agent =
            Self::from_networks(record.mode, record.layout, record.hyperparams.clone(), networks)
                .map_err(|e| Error::Checkpoint(e.to_string()))?;
        agent
            .set_input_scaling(record.input_scaling.clone())
            .map_err(|e| Error::Checkpoint(e.to_string()))?;
        Ok(agent)
    }
}
