use rayon::prelude::*;

use crate::env::trace::{TraceRecorder, TraceRow};
use crate::env::{ActionKind, EnvConfig, EpisodeOutcome, EpisodeState};
use crate::error::{Error, Result};
use crate::nn::{forward_policy, forward_value, Mlp};
use crate::rng::{derive_seed, stream, Stream};
use crate::rollout::buffer::{RolloutBuffer, Transition};
use crate::rollout::inputs::{build_critic_input, build_policy_input, critic_input_width};
use crate::rollout::policy::{check_actor, sample_slot, slot_to_action};

/// One finished episode as gathered by [`collect_episode`].
#[derive(Clone, Debug)]
pub struct EpisodeRun {
    pub transitions: Vec<Transition>,
    pub outcome: EpisodeOutcome,
    /// Trace rows with value and log-probability columns, when requested.
    pub trace: Option<Vec<TraceRow>>,
}

pub(crate) fn check_critic(critic: &Mlp, config: &EnvConfig) -> Result<()> {
    let input = critic_input_width(config);
    if critic.input_width() != input || critic.output_width() != 1 {
        return Err(Error::WidthMismatch {
            expected: format!("critic {input} -> 1"),
            found: format!("critic {} -> {}", critic.input_width(), critic.output_width()),
        });
    }
    Ok(())
}

/// Play episode `episode` of collection seed `seed` with the stochastic actor.
/// The environment and action draws come from their own sub-streams, so the
/// result depends only on `(seed, episode)` and the parameters.
pub fn collect_episode(
    config: &EnvConfig,
    actor: &Mlp,
    critic: &Mlp,
    seed: u64,
    episode: u64,
    trace: bool,
) -> Result<EpisodeRun> {
    let mut state = EpisodeState::new(config, derive_seed(seed, Stream::Env, episode))?;
    let mut rng = stream(seed, Stream::Policy, episode);
    let k = config.num_agents();
    let mut transitions = Vec::new();
    let mut recorder = trace.then(TraceRecorder::new);
    loop {
        let mut actions = vec![None; k];
        let mut pending = Vec::with_capacity(k);
        let mut extras = vec![(0.0, 0.0); k];
        for (agent, action) in actions.iter_mut().enumerate() {
            if !state.is_active(agent) {
                continue;
            }
            let x = build_policy_input(agent, &state, config);
            let c = build_critic_input(agent, &state, config);
            let mask = state.action_mask(config, agent);
            let probs = forward_policy(actor, &x, &mask)?;
            let value = forward_value(critic, &c)?;
            let slot = sample_slot(&probs, &mut rng)?;
            let logp = probs[slot].ln();
            *action = Some(slot_to_action(config, agent, slot)?);
            extras[agent] = (value, logp);
            pending.push(Transition {
                episode,
                agent,
                step: state.time() + 1,
                policy_input: x,
                critic_input: c,
                mask,
                action: slot,
                step_reward: 0.0,
                terminal_reward: 0.0,
                old_logprob: logp,
                old_probs: probs,
                value,
                done: false,
            });
        }
        let out = state.step(config, &actions)?;
        for mut t in pending {
            let s = out.agents[t.agent].as_ref().expect("active agent has a step record");
            t.step_reward = s.reward;
            t.done = s.kind != ActionKind::Sample;
            transitions.push(t);
        }
        if let Some(r) = recorder.as_mut() {
            r.record(episode, &out, &state, Some(&extras));
        }
        if let Some(outcome) = out.outcome {
            return Ok(EpisodeRun {
                transitions,
                trace: recorder.map(|r| r.finish(&outcome)),
                outcome,
            });
        }
    }
}

/// Whole episodes until at least `timesteps` transitions are gathered.
/// Episodes run in waves of `workers`; a wave's surplus episodes are dropped
/// so the buffer is the same for every worker count.
pub fn collect(
    config: &EnvConfig,
    actor: &Mlp,
    critic: &Mlp,
    timesteps: usize,
    seed: u64,
    workers: usize,
) -> Result<RolloutBuffer> {
    Ok(collect_inner(config, actor, critic, timesteps, seed, workers, false)?.0)
}

/// As [`collect`], also returning the trace rows of every kept episode.
pub fn collect_traced(
    config: &EnvConfig,
    actor: &Mlp,
    critic: &Mlp,
    timesteps: usize,
    seed: u64,
    workers: usize,
) -> Result<(RolloutBuffer, Vec<TraceRow>)> {
    collect_inner(config, actor, critic, timesteps, seed, workers, true)
}

fn collect_inner(
    config: &EnvConfig,
    actor: &Mlp,
    critic: &Mlp,
    timesteps: usize,
    seed: u64,
    workers: usize,
    trace: bool,
) -> Result<(RolloutBuffer, Vec<TraceRow>)> {
    config.validate()?;
    check_actor(actor, config)?;
    check_critic(critic, config)?;
    let workers = workers.max(1);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::contract(format!("worker pool: {e}")))?;
    let mut buffer = RolloutBuffer::new();
    let mut rows = Vec::new();
    let mut next = 0u64;
    while buffer.len() < timesteps.max(1) {
        let wave: Vec<Result<EpisodeRun>> = if workers == 1 {
            vec![collect_episode(config, actor, critic, seed, next, trace)]
        } else {
            pool.install(|| {
                (next..next + workers as u64)
                    .into_par_iter()
                    .map(|e| collect_episode(config, actor, critic, seed, e, trace))
                    .collect()
            })
        };
        for run in wave {
            if buffer.len() >= timesteps.max(1) {
                break;
            }
            let run = run?;
            buffer.push_episode(next, run.transitions, run.outcome)?;
            rows.extend(run.trace.unwrap_or_default());
            next += 1;
        }
    }
    Ok((buffer, rows))
}
