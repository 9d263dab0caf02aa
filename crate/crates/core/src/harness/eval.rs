//! Noise-free evaluation of trained learners.

use crate::agent::Agent;
use crate::env::{scripted_partner, DoneReason, EnvConfig, EnvState, LiftEnv};
use crate::error::Result;
use crate::harness::checkpoint::Checkpoint;
use crate::harness::config::ExperimentConfig;
use crate::harness::metrics::MetricsRecord;
use crate::harness::train::{run_episode, ActionSource, EpisodeOptions, RunRngs, Team};

const EVAL_STREAMS: u64 = 8;

/// Runs `episodes` deterministic episodes (no exploration noise, no reset
/// noise) with the checkpoint's learners in the checkpoint's environment.
pub fn run_eval(checkpoint: &Checkpoint, episodes: usize) -> Result<Vec<MetricsRecord>> {
    let agents = checkpoint.restore_agents()?;
    let mut env_cfg = checkpoint.config.env.clone();
    env_cfg.reset_noise = 0.0;
    eval_agents(&checkpoint.config, env_cfg, agents, checkpoint.seed, episodes)
}

/// Evaluates learners built for `config` in an arbitrary environment.
pub fn eval_agents(
    config: &ExperimentConfig,
    env_cfg: EnvConfig,
    agents: Vec<Agent>,
    seed: u64,
    episodes: usize,
) -> Result<Vec<MetricsRecord>> {
    let env = LiftEnv::new(env_cfg)?;
    let updates = vec![0; agents.len()];
    let mut team = Team::from_agents(config, agents, &updates)?;
    let mut rngs = RunRngs::new(seed, EVAL_STREAMS);
    let opts = EpisodeOptions {
        source: ActionSource::Policy(0.0),
        store: false,
        learn: false,
        step_limit: None,
    };
    (1..=episodes)
        .map(|episode| {
            let ep = run_episode(&mut team, &env, opts, &mut rngs)?;
            Ok(MetricsRecord {
                seed,
                episode,
                episode_return: ep.episode_return,
                episode_length: ep.length,
                done_reason: ep.done_reason,
                aen_mse: ep.aen_mse,
                final_height: Some(ep.final_height),
                wall_time_s: 0.0,
            })
        })
        .collect()
}

/// Count of records that ended in a safety termination.
pub fn safety_terminations(records: &[MetricsRecord]) -> usize {
    records
        .iter()
        .filter(|r| r.done_reason == DoneReason::SafetyTermination)
        .count()
}

/// Fixed probe states for estimation error: the states visited when both
/// effectors follow the scripted lift from the nominal start.
pub fn scripted_probe_states(env_cfg: &EnvConfig, count: usize) -> Result<Vec<EnvState>> {
    let mut cfg = env_cfg.clone();
    cfg.reset_noise = 0.0;
    cfg.horizon = cfg.horizon.max(count + 1);
    let env = LiftEnv::new(cfg)?;
    let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0);
    let mut state = env.reset(&mut rng);
    let mut states = Vec::with_capacity(count);
    while states.len() < count {
        states.push(state.clone());
        let partner = scripted_partner(&state, env.config());
        let lift = state.positions[0][1] < env.config().target_height;
        let own = vec![0.0, if lift { env.config().action_bounds.high } else { 0.0 }];
        state = env.step(&state, [&own, &partner])?.next_state;
    }
    Ok(states)
}

/// Mean per-component squared error between agent 1's partner estimate and
/// the scripted partner's action over `states`.
pub fn estimation_mse(agent: &Agent, states: &[EnvState], env_cfg: &EnvConfig) -> Result<f64> {
    let mut sum = 0.0;
    let mut n = 0usize;
    for s in states {
        let view = crate::env::state_partition(s, 1)?;
        let est = agent.estimate_partner_action(&view.partner)?;
        for (e, t) in est.iter().zip(scripted_partner(s, env_cfg)) {
            sum += (e - t) * (e - t);
            n += 1;
        }
    }
    Ok(sum / n as f64)
}
