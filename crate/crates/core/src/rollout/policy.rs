use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand_chacha::ChaCha8Rng;

use crate::env::{AgentAction, EnvConfig, EpisodeState};
use crate::error::{Error, Result};
use crate::nn::{forward_policy, Mlp};
use crate::rollout::inputs::{build_policy_input, policy_input_width};

/// Decentralised decision rule: one call per active agent per tick.
pub trait Policy: Sync {
    fn act(
        &self,
        config: &EnvConfig,
        state: &EpisodeState,
        agent: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<AgentAction>;
}

/// Translate a head slot into an environment action for `agent`.
pub fn slot_to_action(config: &EnvConfig, agent: usize, slot: usize) -> Result<AgentAction> {
    if slot == config.stop_slot() {
        return Ok(AgentAction::Stop);
    }
    config.agents[agent]
        .local_index(slot)
        .map(AgentAction::Sample)
        .ok_or_else(|| Error::contract(format!("agent {agent} cannot sample process {slot}")))
}

/// Draw a slot from a distribution with zero mass on masked slots.
pub fn sample_slot(probs: &[f64], rng: &mut ChaCha8Rng) -> Result<usize> {
    let dist = WeightedIndex::new(probs).map_err(|e| Error::contract(format!("bad action distribution: {e}")))?;
    Ok(dist.sample(rng))
}

/// Lowest-index slot of maximal probability.
pub fn greedy_slot(probs: &[f64]) -> usize {
    let max = probs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    probs.iter().position(|&p| p == max).unwrap_or(0)
}

/// Shared actor network, queried with each agent's own input and mask.
#[derive(Clone, Debug)]
pub struct NetworkPolicy {
    pub actor: Mlp,
    pub greedy: bool,
}

impl NetworkPolicy {
    pub fn new(actor: Mlp, greedy: bool) -> Self {
        Self { actor, greedy }
    }

    pub fn check_widths(&self, config: &EnvConfig) -> Result<()> {
        check_actor(&self.actor, config)
    }

    pub fn distribution(&self, config: &EnvConfig, state: &EpisodeState, agent: usize) -> Result<Vec<f64>> {
        let x = build_policy_input(agent, state, config);
        forward_policy(&self.actor, &x, &state.action_mask(config, agent))
    }
}

pub(crate) fn check_actor(actor: &Mlp, config: &EnvConfig) -> Result<()> {
    let (input, output) = (policy_input_width(config), config.num_action_slots());
    if actor.input_width() != input || actor.output_width() != output {
        return Err(Error::WidthMismatch {
            expected: format!("actor {input} -> {output}"),
            found: format!("actor {} -> {}", actor.input_width(), actor.output_width()),
        });
    }
    Ok(())
}

impl Policy for NetworkPolicy {
    fn act(&self, config: &EnvConfig, state: &EpisodeState, agent: usize, rng: &mut ChaCha8Rng) -> Result<AgentAction> {
        let probs = self.distribution(config, state, agent)?;
        let slot = if self.greedy { greedy_slot(&probs) } else { sample_slot(&probs, rng)? };
        slot_to_action(config, agent, slot)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Stream};

    #[test]
    fn slot_translation() {
        let cfg = EnvConfig::no_overlap(4, 2, 0.1).unwrap();
        assert_eq!(slot_to_action(&cfg, 1, 3).unwrap(), AgentAction::Sample(1));
        assert_eq!(slot_to_action(&cfg, 1, 4).unwrap(), AgentAction::Stop);
        assert!(slot_to_action(&cfg, 1, 0).is_err());
    }

    #[test]
    fn sampling_respects_zero_mass() {
        let mut rng = stream(1, Stream::Policy, 0);
        let probs = [0.0, 0.3, 0.0, 0.7];
        let mut counts = [0; 4];
        for _ in 0..2000 {
            counts[sample_slot(&probs, &mut rng).unwrap()] += 1;
        }
        assert_eq!(counts[0] + counts[2], 0);
        assert!((counts[3] as f64 / 2000.0 - 0.7).abs() < 0.05);
        assert_eq!(greedy_slot(&[0.2, 0.4, 0.4]), 1);
    }

    #[test]
    fn width_check() {
        let cfg = EnvConfig::independent(3, 2, 0.1).unwrap();
        let mut rng = stream(1, Stream::Init, 0);
        let good = Mlp::new(policy_input_width(&cfg), &[4], 4, 0.01, &mut rng);
        let bad = Mlp::new(3, &[4], 4, 0.01, &mut rng);
        assert!(NetworkPolicy::new(good, false).check_widths(&cfg).is_ok());
        assert!(NetworkPolicy::new(bad, false).check_widths(&cfg).is_err());
    }
}
