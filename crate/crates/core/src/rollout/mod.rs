//! Experience collection: network inputs, the shared actor as a per-agent
//! policy, and whole-episode rollouts into a buffer with coupled rewards.

mod buffer;
mod collect;
mod inputs;
mod policy;

pub use buffer::{assign_coupled_rewards, EpisodeRecord, RolloutBuffer, Transition};
pub use collect::{collect, collect_episode, collect_traced, EpisodeRun};
pub use inputs::{build_critic_input, build_policy_input, critic_input_width, policy_input_width};
pub use policy::{greedy_slot, sample_slot, slot_to_action, NetworkPolicy, Policy};
