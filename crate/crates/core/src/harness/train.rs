//! Seeded training runs and fine-tuning.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::agent::{Agent, Mode};
use crate::env::{scripted_partner, state_partition, DoneReason, EnvConfig, EnvState, LiftEnv};
use crate::error::{Error, Result};
use crate::harness::checkpoint::Checkpoint;
use crate::harness::config::{ExperimentConfig, PartnerKind};
use crate::harness::metrics::{write_metrics, MetricsRecord};
use crate::rl::{ReplayBuffer, Transition};

/// Independent random streams of one run.
pub struct RunRngs {
    pub init: ChaCha8Rng,
    pub env: ChaCha8Rng,
    pub explore: ChaCha8Rng,
    pub learn: ChaCha8Rng,
}

impl RunRngs {
    /// Streams `base..base + 4` of the ChaCha generator keyed by `seed`.
    pub fn new(seed: u64, base: u64) -> Self {
        let stream = |k: u64| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(base + k);
            rng
        };
        Self {
            init: stream(0),
            env: stream(1),
            explore: stream(2),
            learn: stream(3),
        }
    }
}

pub const TRAIN_STREAMS: u64 = 0;
const FINETUNE_STREAMS: u64 = 4;

/// A learner with its own replay buffer and update counter.
#[derive(Debug, Clone)]
pub struct Learner {
    pub agent: Agent,
    pub buffer: ReplayBuffer,
    pub updates: u64,
}

impl Learner {
    fn new(agent: Agent, updates: u64) -> Result<Self> {
        Ok(Self {
            buffer: agent.new_buffer()?,
            agent,
            updates,
        })
    }

    fn maybe_learn<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<()> {
        if self.buffer.len() >= self.agent.hyperparams().batch_n {
            self.updates += 1;
            self.agent.learn(&self.buffer, self.updates, rng)?;
        }
        Ok(())
    }
}

/// The learners acting in one environment.
#[derive(Debug, Clone)]
pub enum Team {
    /// One learner emitting the joint action from the full state.
    Centralized(Learner),
    /// One learner per effector, each with its own buffer.
    Decentralized(Box<[Learner; 2]>),
    /// Agent 1 learns; agent 2 follows the scripted lift.
    Scripted(Learner),
}

/// How actions are produced on a step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ActionSource {
    /// Policy output plus Gaussian noise of this scale.
    Policy(f64),
    /// Uniform over the action box, ignoring the policy.
    Uniform,
}

/// What happened on one environment step, for bookkeeping.
struct StepOutcome {
    next: EnvState,
    reward: f64,
    /// Squared estimation error against the scripted partner, per component.
    estimate_sq_err: Option<f64>,
}

impl Team {
    pub fn new<R: Rng + ?Sized>(config: &ExperimentConfig, rng: &mut R) -> Result<Self> {
        let layout = config.agent_layout();
        let hyper = config.hyperparams.clone();
        let mut make = |agent_index: usize| -> Result<Learner> {
            let mut agent = Agent::new(config.mode, layout, hyper.clone(), rng)?;
            agent.set_input_scaling(config.input_scaling(agent_index))?;
            Learner::new(agent, 0)
        };
        Ok(match (config.mode, config.partner) {
            (Mode::CentralizedTd3, _) => Team::Centralized(make(1)?),
            (Mode::DecentralizedAenTd3, PartnerKind::Learned) => {
                let first = make(1)?;
                let second = make(2)?;
                Team::Decentralized(Box::new([first, second]))
            }
            (Mode::DecentralizedAenTd3, PartnerKind::Scripted) => Team::Scripted(make(1)?),
        })
    }

    /// Rebuilds a team from learners with fresh buffers.
    pub fn from_agents(config: &ExperimentConfig, agents: Vec<Agent>, updates: &[u64]) -> Result<Self> {
        let mut learners = agents
            .into_iter()
            .zip(updates)
            .map(|(a, &u)| Learner::new(a, u))
            .collect::<Result<Vec<_>>>()?;
        let count_err = || Error::Checkpoint("learner count does not match the configuration".into());
        Ok(match (config.mode, config.partner) {
            (Mode::CentralizedTd3, _) => Team::Centralized(learners.pop().ok_or_else(count_err)?),
            (Mode::DecentralizedAenTd3, PartnerKind::Scripted) => {
                Team::Scripted(learners.pop().ok_or_else(count_err)?)
            }
            (Mode::DecentralizedAenTd3, PartnerKind::Learned) => {
                let pair: [Learner; 2] = learners.try_into().map_err(|_| count_err())?;
                Team::Decentralized(Box::new(pair))
            }
        })
    }

    pub fn learners(&self) -> Vec<&Learner> {
        match self {
            Team::Centralized(l) | Team::Scripted(l) => vec![l],
            Team::Decentralized(pair) => pair.iter().collect(),
        }
    }

    fn learners_mut(&mut self) -> Vec<&mut Learner> {
        match self {
            Team::Centralized(l) | Team::Scripted(l) => vec![l],
            Team::Decentralized(pair) => pair.iter_mut().collect(),
        }
    }

    pub fn agents(&self) -> Vec<&Agent> {
        self.learners().into_iter().map(|l| &l.agent).collect()
    }

    pub fn update_counts(&self) -> Vec<u64> {
        self.learners().iter().map(|l| l.updates).collect()
    }

    fn uniform_action<R: Rng + ?Sized>(dim: usize, env: &EnvConfig, rng: &mut R) -> Vec<f64> {
        let b = env.action_bounds;
        (0..dim).map(|_| rng.random_range(b.low..=b.high)).collect()
    }

    fn act<R: Rng + ?Sized>(
        agent: &Agent,
        own_state: &[f64],
        source: ActionSource,
        env: &EnvConfig,
        rng: &mut R,
    ) -> Result<Vec<f64>> {
        match source {
            ActionSource::Policy(sigma) => agent.select_action(own_state, sigma, rng),
            ActionSource::Uniform => Ok(Self::uniform_action(agent.layout().own_action_dim, env, rng)),
        }
    }

    /// Acts, steps the environment and, when `store` is set, appends one
    /// transition to each learner's buffer.
    fn step<R: Rng + ?Sized>(
        &mut self,
        env: &LiftEnv,
        state: &EnvState,
        source: ActionSource,
        store: bool,
        rng: &mut R,
    ) -> Result<StepOutcome> {
        let cfg = env.config();
        match self {
            Team::Centralized(l) => {
                let s = state.to_vector();
                let a = Self::act(&l.agent, &s, source, cfg, rng)?;
                let res = env.step(state, [&a[..2], &a[2..]])?;
                if store {
                    l.buffer.push(Transition {
                        state: s,
                        own_action: a,
                        partner_estimate: Vec::new(),
                        reward: res.reward,
                        next_state: res.next_state.to_vector(),
                        terminated: res.done_reason == DoneReason::SafetyTermination,
                    })?;
                }
                Ok(StepOutcome {
                    next: res.next_state,
                    reward: res.reward,
                    estimate_sq_err: None,
                })
            }
            Team::Decentralized(pair) => {
                let mut views = Vec::with_capacity(2);
                let mut actions = Vec::with_capacity(2);
                let mut estimates = Vec::with_capacity(2);
                for (i, l) in pair.iter().enumerate() {
                    let view = state_partition(state, i + 1)?;
                    actions.push(Self::act(&l.agent, &view.own, source, cfg, rng)?);
                    estimates.push(l.agent.partner_estimate_for_storage(&view.partner)?);
                    views.push(view);
                }
                let res = env.step(state, [&actions[0], &actions[1]])?;
                if store {
                    let terminated = res.done_reason == DoneReason::SafetyTermination;
                    for (i, l) in pair.iter_mut().enumerate() {
                        l.buffer.push(Transition {
                            state: views[i].concat(),
                            own_action: std::mem::take(&mut actions[i]),
                            partner_estimate: std::mem::take(&mut estimates[i]),
                            reward: res.reward,
                            next_state: state_partition(&res.next_state, i + 1)?.concat(),
                            terminated,
                        })?;
                    }
                }
                Ok(StepOutcome {
                    next: res.next_state,
                    reward: res.reward,
                    estimate_sq_err: None,
                })
            }
            Team::Scripted(l) => {
                let view = state_partition(state, 1)?;
                let a = Self::act(&l.agent, &view.own, source, cfg, rng)?;
                let estimate = l.agent.partner_estimate_for_storage(&view.partner)?;
                let partner = scripted_partner(state, cfg);
                let sq_err = estimate
                    .iter()
                    .zip(&partner)
                    .map(|(e, t)| (e - t) * (e - t))
                    .sum::<f64>()
                    / partner.len() as f64;
                let res = env.step(state, [&a, &partner])?;
                if store {
                    l.buffer.push(Transition {
                        state: view.concat(),
                        own_action: a,
                        partner_estimate: estimate,
                        reward: res.reward,
                        next_state: state_partition(&res.next_state, 1)?.concat(),
                        terminated: res.done_reason == DoneReason::SafetyTermination,
                    })?;
                }
                Ok(StepOutcome {
                    next: res.next_state,
                    reward: res.reward,
                    estimate_sq_err: Some(sq_err),
                })
            }
        }
    }

    fn learn<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<()> {
        for l in self.learners_mut() {
            l.maybe_learn(rng)?;
        }
        Ok(())
    }
}

/// Result of one episode.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeSummary {
    pub episode_return: f64,
    pub length: usize,
    pub done_reason: DoneReason,
    pub final_height: f64,
    /// Mean per-component squared estimation error, scripted partner only.
    pub aen_mse: Option<f64>,
}

/// Per-step behaviour of [`run_episode`].
#[derive(Debug, Clone, Copy)]
pub struct EpisodeOptions {
    pub source: ActionSource,
    pub store: bool,
    pub learn: bool,
    /// Stops early after this many steps, leaving the status `Running`.
    pub step_limit: Option<usize>,
}

/// Runs one episode from a fresh reset.
pub fn run_episode(
    team: &mut Team,
    env: &LiftEnv,
    opts: EpisodeOptions,
    rngs: &mut RunRngs,
) -> Result<EpisodeSummary> {
    let mut state = env.reset(&mut rngs.env);
    let mut ret = 0.0;
    let mut err_sum = 0.0;
    let mut err_count = 0usize;
    while !state.is_done() && opts.step_limit.is_none_or(|lim| state.step_count < lim) {
        let out = team.step(env, &state, opts.source, opts.store, &mut rngs.explore)?;
        if opts.learn {
            team.learn(&mut rngs.learn)?;
        }
        ret += out.reward;
        if let Some(e) = out.estimate_sq_err {
            err_sum += e;
            err_count += 1;
        }
        state = out.next;
    }
    Ok(EpisodeSummary {
        episode_return: ret,
        length: state.step_count,
        done_reason: state.status,
        final_height: state.beam_height(),
        aen_mse: (err_count > 0).then(|| err_sum / err_count as f64),
    })
}

/// Uniform-random exploration that only fills buffers.
pub fn prefill(team: &mut Team, env: &LiftEnv, steps: usize, rngs: &mut RunRngs) -> Result<()> {
    let mut remaining = steps;
    while remaining > 0 {
        let opts = EpisodeOptions {
            source: ActionSource::Uniform,
            store: true,
            learn: false,
            step_limit: Some(remaining),
        };
        let ep = run_episode(team, env, opts, rngs)?;
        remaining -= ep.length;
    }
    Ok(())
}

/// Config-echo lines written at the top of every metrics file.
pub fn config_echo(run: &str, config: &ExperimentConfig, seed: u64, extra: &[String]) -> Vec<String> {
    let mut lines = vec![
        format!("run = \"{run}\""),
        format!("label = \"{}\"", config.mode_label()),
        format!("seed = {seed}"),
    ];
    lines.extend(extra.iter().cloned());
    lines.extend(config.to_toml_string().lines().map(str::to_string));
    lines
}

fn record(seed: u64, episode: usize, ep: &EpisodeSummary, started: Instant) -> MetricsRecord {
    MetricsRecord {
        seed,
        episode,
        episode_return: ep.episode_return,
        episode_length: ep.length,
        done_reason: ep.done_reason,
        aen_mse: ep.aen_mse,
        final_height: Some(ep.final_height),
        wall_time_s: started.elapsed().as_secs_f64(),
    }
}

/// Outcome of training one seed.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub records: Vec<MetricsRecord>,
    pub checkpoint: Checkpoint,
    pub team: Team,
}

/// Trains one seed in memory: prefill, then `episodes_m` episodes with an
/// update after every step once a buffer holds a full batch.
pub fn train_seed(config: &ExperimentConfig, seed: u64) -> Result<TrainOutcome> {
    train_seed_with(config, seed, |_, _| {})
}

/// [`train_seed`] with a callback after each episode.
pub fn train_seed_with(
    config: &ExperimentConfig,
    seed: u64,
    mut on_episode: impl FnMut(&MetricsRecord, &Team),
) -> Result<TrainOutcome> {
    config.validate()?;
    let started = Instant::now();
    let env = LiftEnv::new(config.env.clone())?;
    let mut rngs = RunRngs::new(seed, TRAIN_STREAMS);
    let mut team = Team::new(config, &mut rngs.init)?;
    prefill(&mut team, &env, config.learning_starts, &mut rngs)?;
    let mut env_steps = config.learning_starts as u64;
    let opts = EpisodeOptions {
        source: ActionSource::Policy(config.hyperparams.explore_sigma),
        store: true,
        learn: true,
        step_limit: None,
    };
    let mut records = Vec::with_capacity(config.hyperparams.episodes_m);
    for episode in 1..=config.hyperparams.episodes_m {
        let ep = run_episode(&mut team, &env, opts, &mut rngs)?;
        env_steps += ep.length as u64;
        let rec = record(seed, episode, &ep, started);
        log::debug!(
            "seed {seed} episode {episode}: return {:.3}, {} steps, {}",
            rec.episode_return,
            rec.episode_length,
            rec.done_reason
        );
        on_episode(&rec, &team);
        records.push(rec);
    }
    let checkpoint = Checkpoint::from_agents(config, seed, &team.agents(), env_steps, team.update_counts());
    Ok(TrainOutcome {
        records,
        checkpoint,
        team,
    })
}

/// Trains every configured seed, writing metrics and checkpoints per seed.
pub fn run_training(config: &ExperimentConfig) -> Result<Vec<MetricsRecord>> {
    config.validate()?;
    let mut all = Vec::new();
    for &seed in &config.seeds {
        all.extend(run_training_seed(config, seed)?);
    }
    Ok(all)
}

/// Trains one seed and persists its metrics and checkpoint.
pub fn run_training_seed(config: &ExperimentConfig, seed: u64) -> Result<Vec<MetricsRecord>> {
    let out = train_seed(config, seed)?;
    let header = config_echo("train", config, seed, &[]);
    write_metrics(&config.metrics_path(seed), &header, &out.records, config.output.record_wall_time)?;
    out.checkpoint.save(&config.checkpoint_path(seed))?;
    Ok(out.records)
}

/// Outcome of a fine-tuning run.
#[derive(Debug, Clone)]
pub struct FinetuneOutcome {
    pub records: Vec<MetricsRecord>,
    pub checkpoint: Checkpoint,
}

/// Continues training a checkpoint under a tighter safety margin for
/// `extra_steps` environment steps, with fresh replay buffers and no random
/// prefill. The final episode is cut short when the step budget runs out.
pub fn finetune(checkpoint: &Checkpoint, new_delta: f64, extra_steps: u64) -> Result<FinetuneOutcome> {
    let old_delta = checkpoint.config.env.delta;
    if !(new_delta < old_delta) {
        return Err(Error::config(format!(
            "fine-tuning must tighten delta: {new_delta} is not below {old_delta}"
        )));
    }
    let mut config = checkpoint.config.clone();
    config.env.delta = new_delta;
    config.validate()?;
    let started = Instant::now();
    let env = LiftEnv::new(config.env.clone())?;
    let mut team = Team::from_agents(&config, checkpoint.restore_agents()?, &checkpoint.update_counts)?;
    let mut rngs = RunRngs::new(checkpoint.seed, FINETUNE_STREAMS);
    let mut remaining = extra_steps;
    let mut records = Vec::new();
    while remaining > 0 {
        let opts = EpisodeOptions {
            source: ActionSource::Policy(config.hyperparams.explore_sigma),
            store: true,
            learn: true,
            step_limit: Some(usize::try_from(remaining).unwrap_or(usize::MAX)),
        };
        let ep = run_episode(&mut team, &env, opts, &mut rngs)?;
        remaining -= ep.length as u64;
        records.push(record(checkpoint.seed, records.len() + 1, &ep, started));
    }
    let new_ckpt = Checkpoint::from_agents(
        &config,
        checkpoint.seed,
        &team.agents(),
        checkpoint.env_steps + extra_steps,
        team.update_counts(),
    );
    Ok(FinetuneOutcome {
        records,
        checkpoint: new_ckpt,
    })
}

/// Config-echo lines for a fine-tuning metrics file.
pub fn finetune_echo(source: &Checkpoint, out: &Checkpoint, extra_steps: u64) -> Vec<String> {
    let extra = [
        format!("previous_delta = {}", source.config.env.delta),
        format!("delta = {}", out.config.env.delta),
        format!("extra_steps = {extra_steps}"),
    ];
    config_echo("finetune", &out.config, out.seed, &extra)
}
