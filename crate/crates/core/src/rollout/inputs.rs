//! Network inputs.
//!
//! Peer blocks follow agent id order, skipping the agent itself. Each peer
//! block is built from the message that peer broadcast on the previous tick:
//!
//! ```text
//! [last sampled process one-hot (M)] [stopped flag] [declared one-hot (M)]
//! ```
//!
//! The actor sees `own belief ++ peer blocks`, with the peer blocks zeroed
//! when communication is off. The critic sees `own belief ++ (peer lagged
//! belief ++ peer block)` per peer; a stopped peer's belief is all zeros.

use crate::env::{EnvConfig, EpisodeState, MessageContent};

pub fn policy_input_width(config: &EnvConfig) -> usize {
    let m = config.num_processes();
    m + (config.num_agents() - 1) * (2 * m + 1)
}

pub fn critic_input_width(config: &EnvConfig) -> usize {
    let m = config.num_processes();
    m + (config.num_agents() - 1) * (3 * m + 1)
}

fn push_message_block(out: &mut Vec<f64>, m: usize, content: Option<MessageContent>) {
    let start = out.len();
    out.resize(start + 2 * m + 1, 0.0);
    match content {
        Some(MessageContent::LastAction(p)) => out[start + p] = 1.0,
        Some(MessageContent::Declared(d)) => {
            out[start + m] = 1.0;
            out[start + m + 1 + d] = 1.0;
        }
        Some(MessageContent::Null) | None => {}
    }
}

pub fn build_policy_input(agent: usize, state: &EpisodeState, config: &EnvConfig) -> Vec<f64> {
    let m = config.num_processes();
    let mut out = Vec::with_capacity(policy_input_width(config));
    out.extend_from_slice(state.belief(agent).probs());
    for peer in (0..config.num_agents()).filter(|&j| j != agent) {
        let content = config.communication.then(|| state.messages()[peer].content);
        push_message_block(&mut out, m, content);
    }
    out
}

pub fn build_critic_input(agent: usize, state: &EpisodeState, config: &EnvConfig) -> Vec<f64> {
    let m = config.num_processes();
    let mut out = Vec::with_capacity(critic_input_width(config));
    out.extend_from_slice(state.belief(agent).probs());
    for peer in (0..config.num_agents()).filter(|&j| j != agent) {
        if state.is_active(peer) {
            out.extend_from_slice(state.lagged_belief(peer).probs());
        } else {
            out.resize(out.len() + m, 0.0);
        }
        push_message_block(&mut out, m, Some(state.messages()[peer].content));
    }
    out
}
