//! Decentralised anomaly-detection environment.
//!
//! `M` processes, exactly one of them anomalous. `K` agents each sample one
//! process per tick from their own subset, update a private Bayesian belief
//! over which process is anomalous, and eventually stop and declare. Agents
//! exchange one short message per tick: the process they just sampled, or
//! their declaration once stopped.

mod belief;
mod config;
mod episode;
pub mod trace;

pub use belief::{Belief, BELIEF_FLOOR};
pub use config::{
    default_terminal_costs, AgentSpec, EnvConfig, HypothesisSpace, MessageRepeat, ObservationModel, MIN_STD_DEV,
};
pub use episode::{
    terminal_cost, ActionKind, AgentAction, AgentStep, EpisodeOutcome, EpisodeState, Message, MessageContent,
    StepOutcome,
};
