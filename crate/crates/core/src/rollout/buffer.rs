use std::ops::Range;

use crate::env::EpisodeOutcome;
use crate::error::{Error, Result};
use crate::sum::exact_sum;

/// One agent's decision on one tick, as seen by the learner.
#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub episode: u64,
    pub agent: usize,
    pub step: u32,
    pub policy_input: Vec<f64>,
    pub critic_input: Vec<f64>,
    pub mask: Vec<bool>,
    /// Slot of the shared head: a global process index, or `M` for stop.
    pub action: usize,
    /// `-c` charged for this tick.
    pub step_reward: f64,
    /// Share of `-J` settled on the agent's final transition, zero elsewhere.
    pub terminal_reward: f64,
    pub old_logprob: f64,
    pub old_probs: Vec<f64>,
    /// Critic estimate at collection time.
    pub value: f64,
    pub done: bool,
}

impl Transition {
    pub fn reward(&self) -> f64 {
        self.step_reward + self.terminal_reward
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeRecord {
    pub id: u64,
    pub range: Range<usize>,
    pub outcome: EpisodeOutcome,
}

/// Complete episodes, stored back to back. Within an episode transitions are
/// ordered by tick, then agent id.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RolloutBuffer {
    transitions: Vec<Transition>,
    episodes: Vec<EpisodeRecord>,
}

/// Put each agent's terminal share on its last transition. Every agent must
/// have exactly one `done` transition, and it must be its last.
pub fn assign_coupled_rewards(transitions: &mut [Transition], outcome: &EpisodeOutcome) -> Result<()> {
    for k in 0..outcome.num_agents() {
        let last = transitions
            .iter()
            .rposition(|t| t.agent == k)
            .ok_or_else(|| Error::contract(format!("agent {k} has no transitions")))?;
        let done_count = transitions.iter().filter(|t| t.agent == k && t.done).count();
        if !transitions[last].done || done_count != 1 {
            return Err(Error::contract(format!("agent {k} has an incomplete trajectory")));
        }
        transitions[last].terminal_reward = outcome.terminal_rewards[k];
    }
    if let Some(t) = transitions.iter().find(|t| t.agent >= outcome.num_agents()) {
        return Err(Error::contract(format!("transition for unknown agent {}", t.agent)));
    }
    Ok(())
}

impl RolloutBuffer {
    pub fn new() -> Self {
        Self::default()
    }

    /// Append a finished episode, settling its coupled terminal rewards.
    pub fn push_episode(&mut self, id: u64, mut transitions: Vec<Transition>, outcome: EpisodeOutcome) -> Result<()> {
        assign_coupled_rewards(&mut transitions, &outcome)?;
        let start = self.transitions.len();
        self.transitions.extend(transitions);
        self.episodes.push(EpisodeRecord {
            id,
            range: start..self.transitions.len(),
            outcome,
        });
        Ok(())
    }

    /// Concatenate `other` after `self`.
    pub fn merge(&mut self, other: RolloutBuffer) {
        let offset = self.transitions.len();
        self.transitions.extend(other.transitions);
        self.episodes.extend(other.episodes.into_iter().map(|mut e| {
            e.range = e.range.start + offset..e.range.end + offset;
            e
        }));
    }

    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn transitions(&self) -> &[Transition] {
        &self.transitions
    }

    pub fn episodes(&self) -> &[EpisodeRecord] {
        &self.episodes
    }

    /// Index lists, one per (episode, agent), each in tick order.
    pub fn agent_trajectories(&self) -> Vec<Vec<usize>> {
        let mut out = Vec::new();
        for ep in &self.episodes {
            for k in 0..ep.outcome.num_agents() {
                let idx: Vec<usize> = ep.range.clone().filter(|&i| self.transitions[i].agent == k).collect();
                if !idx.is_empty() {
                    out.push(idx);
                }
            }
        }
        out
    }

    /// `-(sum of every reward in the episode)`, correctly rounded.
    pub fn episode_cost(&self, episode: usize) -> f64 {
        let ep = &self.episodes[episode];
        -exact_sum(
            self.transitions[ep.range.clone()]
                .iter()
                .flat_map(|t| [t.step_reward, t.terminal_reward]),
        )
    }

    pub fn mean_episode_risk(&self) -> f64 {
        mean(self.episodes.iter().map(|e| e.outcome.risk()))
    }

    /// Fraction of wrong declarations over all agents and episodes.
    pub fn mean_error_rate(&self) -> f64 {
        mean(self.episodes.iter().flat_map(|e| {
            (0..e.outcome.num_agents()).map(move |k| if e.outcome.is_wrong(k) { 1.0 } else { 0.0 })
        }))
    }

    /// Mean stop time over all agents and episodes.
    pub fn mean_sample_size(&self) -> f64 {
        mean(self.episodes.iter().flat_map(|e| e.outcome.stop_times.iter().map(|&t| t as f64)))
    }
}

fn mean(it: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = it.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        s / n as f64
    }
}
