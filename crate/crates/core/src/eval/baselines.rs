use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::env::{AgentAction, AgentSpec, Belief, EnvConfig, EpisodeState};
use crate::error::{Error, Result};
use crate::rollout::{slot_to_action, Policy};

/// Highest-belief rule: stop once the largest posterior reaches `threshold`,
/// otherwise sample the agent's own process with the largest posterior
/// (lowest index on ties).
pub fn heuristic_action(belief: &Belief, threshold: f64, agent: &AgentSpec) -> AgentAction {
    if belief.max() >= threshold {
        return AgentAction::Stop;
    }
    let probs = belief.probs();
    let mut best = 0;
    for (local, &p) in agent.processes().iter().enumerate() {
        if probs[p] > probs[agent.processes()[best]] {
            best = local;
        }
    }
    AgentAction::Sample(best)
}

#[derive(Clone, Debug)]
pub struct HeuristicPolicy {
    pub threshold: f64,
}

impl HeuristicPolicy {
    pub fn new(threshold: f64, num_processes: usize) -> Result<Self> {
        if !(threshold > 1.0 / num_processes as f64 && threshold < 1.0) {
            return Err(Error::config(
                "run.heuristic_threshold",
                format!("must lie in (1/M, 1) = ({}, 1)", 1.0 / num_processes as f64),
            ));
        }
        Ok(Self { threshold })
    }
}

impl Policy for HeuristicPolicy {
    fn act(&self, config: &EnvConfig, state: &EpisodeState, agent: usize, _: &mut ChaCha8Rng) -> Result<AgentAction> {
        Ok(heuristic_action(state.belief(agent), self.threshold, &config.agents[agent]))
    }
}

/// Stops on the first tick and declares from the prior.
#[derive(Clone, Copy, Debug, Default)]
pub struct ImmediateStop;

impl Policy for ImmediateStop {
    fn act(&self, _: &EnvConfig, _: &EpisodeState, _: usize, _: &mut ChaCha8Rng) -> Result<AgentAction> {
        Ok(AgentAction::Stop)
    }
}

/// Stops on the first tick and declares a uniformly drawn hypothesis.
#[derive(Clone, Copy, Debug, Default)]
pub struct UniformGuess;

impl Policy for UniformGuess {
    fn act(&self, config: &EnvConfig, _: &EpisodeState, _: usize, rng: &mut ChaCha8Rng) -> Result<AgentAction> {
        Ok(AgentAction::Declare(rng.random_range(0..config.num_processes())))
    }
}

/// Uniform over the legal head slots each tick.
#[derive(Clone, Copy, Debug, Default)]
pub struct UniformRandom;

impl Policy for UniformRandom {
    fn act(&self, config: &EnvConfig, state: &EpisodeState, agent: usize, rng: &mut ChaCha8Rng) -> Result<AgentAction> {
        let mask = state.action_mask(config, agent);
        let legal: Vec<usize> = (0..mask.len()).filter(|&j| mask[j]).collect();
        slot_to_action(config, agent, legal[rng.random_range(0..legal.len())])
    }
}

/// Reference bound: stops on the first tick declaring the true hypothesis.
#[derive(Clone, Copy, Debug, Default)]
pub struct Oracle;

impl Policy for Oracle {
    fn act(&self, _: &EnvConfig, state: &EpisodeState, _: usize, _: &mut ChaCha8Rng) -> Result<AgentAction> {
        Ok(AgentAction::Declare(state.true_hypothesis()))
    }
}
