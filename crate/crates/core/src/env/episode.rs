use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::env::belief::Belief;
use crate::env::config::EnvConfig;
use crate::error::{Error, Result};
use crate::sum::exact_mul_add;

/// What an active agent does on one tick.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AgentAction {
    /// Sample the agent's `local`-th sampleable process.
    Sample(usize),
    /// Stop and declare the argmax of the agent's belief.
    Stop,
    /// Stop with an externally chosen declaration. Reference policies use
    /// this to bypass the belief-based decision rule.
    Declare(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MessageContent {
    Null,
    /// Global index of the process the sender sampled on the previous tick.
    LastAction(usize),
    /// Hypothesis the sender declared when it stopped.
    Declared(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Message {
    pub sender: usize,
    pub content: MessageContent,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ActionKind {
    Sample,
    Stop,
    /// Stop imposed by the horizon cap.
    ForcedStop,
}

impl ActionKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ActionKind::Sample => "sample",
            ActionKind::Stop => "stop",
            ActionKind::ForcedStop => "forced_stop",
        }
    }
}

/// Result of one tick for one agent that was active on it.
#[derive(Clone, Debug, PartialEq)]
pub struct AgentStep {
    pub agent: usize,
    pub kind: ActionKind,
    pub process: Option<usize>,
    pub observation: Option<f64>,
    /// Per-tick cost `-c`; the terminal share is settled in [`EpisodeOutcome`].
    pub reward: f64,
    pub declaration: Option<usize>,
}

/// Final accounting of a finished episode.
#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeOutcome {
    pub true_hypothesis: usize,
    pub stop_times: Vec<u32>,
    pub declarations: Vec<usize>,
    pub num_wrong: usize,
    pub sampling_cost: f64,
    pub terminal_cost: f64,
    /// Part of `-terminal_cost` credited to each agent's final transition.
    pub terminal_rewards: Vec<f64>,
}

impl EpisodeOutcome {
    pub fn num_agents(&self) -> usize {
        self.stop_times.len()
    }

    pub fn is_wrong(&self, agent: usize) -> bool {
        self.declarations[agent] != self.true_hypothesis
    }

    pub fn total_samples(&self) -> u64 {
        self.stop_times.iter().map(|&t| t as u64).sum()
    }

    /// `c * sum(tau) + J`, correctly rounded.
    pub fn risk(&self) -> f64 {
        exact_mul_add(self.sampling_cost, self.total_samples(), self.terminal_cost)
    }
}

#[derive(Clone, Debug)]
pub struct StepOutcome {
    /// Tick just executed, starting at 1.
    pub tick: u32,
    /// Indexed by agent; `None` for agents inactive on this tick.
    pub agents: Vec<Option<AgentStep>>,
    /// Present when this tick ended the episode.
    pub outcome: Option<EpisodeOutcome>,
}

/// Joint terminal cost `J[w]`, `w` = number of wrong declarations.
pub fn terminal_cost(declarations: &[Option<usize>], true_hypothesis: usize, table: &[f64]) -> Result<f64> {
    if table.len() != declarations.len() + 1 {
        return Err(Error::contract(format!(
            "terminal cost table has {} entries for {} agents",
            table.len(),
            declarations.len()
        )));
    }
    let mut wrong = 0;
    for (k, d) in declarations.iter().enumerate() {
        match d {
            Some(d) if *d != true_hypothesis => wrong += 1,
            Some(_) => {}
            None => return Err(Error::contract(format!("agent {k} has not declared"))),
        }
    }
    Ok(table[wrong])
}

/// Runtime state of one episode.
#[derive(Clone, Debug)]
pub struct EpisodeState {
    true_hypothesis: usize,
    time: u32,
    beliefs: Vec<Belief>,
    lagged: Vec<Belief>,
    active: Vec<bool>,
    stop_times: Vec<Option<u32>>,
    declarations: Vec<Option<usize>>,
    last_sample: Vec<Option<usize>>,
    messages: Vec<Message>,
    rng: ChaCha8Rng,
    outcome: Option<EpisodeOutcome>,
}

impl EpisodeState {
    /// Fresh episode: beliefs at the prior, hypothesis drawn from the prior.
    pub fn new(config: &EnvConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = config.hypotheses.sample(&mut rng);
        Ok(Self::start(config, h, rng))
    }

    /// Fresh episode with a fixed true hypothesis.
    pub fn with_hypothesis(config: &EnvConfig, seed: u64, true_hypothesis: usize) -> Result<Self> {
        config.validate()?;
        if true_hypothesis >= config.num_processes() {
            return Err(Error::contract(format!("hypothesis {true_hypothesis} out of range")));
        }
        Ok(Self::start(config, true_hypothesis, ChaCha8Rng::seed_from_u64(seed)))
    }

    fn start(config: &EnvConfig, true_hypothesis: usize, rng: ChaCha8Rng) -> Self {
        let k = config.num_agents();
        let prior = Belief::from_prior(config.hypotheses.prior());
        Self {
            true_hypothesis,
            time: 0,
            beliefs: vec![prior.clone(); k],
            lagged: vec![prior; k],
            active: vec![true; k],
            stop_times: vec![None; k],
            declarations: vec![None; k],
            last_sample: vec![None; k],
            messages: (0..k)
                .map(|sender| Message {
                    sender,
                    content: MessageContent::Null,
                })
                .collect(),
            rng,
            outcome: None,
        }
    }

    pub fn true_hypothesis(&self) -> usize {
        self.true_hypothesis
    }

    /// Number of completed ticks.
    pub fn time(&self) -> u32 {
        self.time
    }

    pub fn num_agents(&self) -> usize {
        self.active.len()
    }

    pub fn belief(&self, agent: usize) -> &Belief {
        &self.beliefs[agent]
    }

    /// Belief of `agent` one tick earlier (the prior before the first tick).
    pub fn lagged_belief(&self, agent: usize) -> &Belief {
        &self.lagged[agent]
    }

    pub fn is_active(&self, agent: usize) -> bool {
        self.active[agent]
    }

    pub fn stop_time(&self, agent: usize) -> Option<u32> {
        self.stop_times[agent]
    }

    pub fn declaration(&self, agent: usize) -> Option<usize> {
        self.declarations[agent]
    }

    /// Messages visible on the coming tick, one per agent.
    pub fn messages(&self) -> &[Message] {
        &self.messages
    }

    pub fn is_terminal(&self) -> bool {
        self.outcome.is_some()
    }

    pub fn outcome(&self) -> Option<&EpisodeOutcome> {
        self.outcome.as_ref()
    }

    #[cfg(test)]
    pub(crate) fn set_belief_for_test(&mut self, agent: usize, belief: Belief) {
        self.beliefs[agent] = belief;
    }

    /// Legal head slots for `agent` on the coming tick: its processes plus
    /// stop, or stop alone on the final tick.
    pub fn action_mask(&self, config: &EnvConfig, agent: usize) -> Vec<bool> {
        let mut mask = vec![false; config.num_action_slots()];
        if !self.active[agent] {
            return mask;
        }
        mask[config.stop_slot()] = true;
        if self.time + 1 < config.max_horizon {
            for &p in config.agents[agent].processes() {
                mask[p] = true;
            }
        }
        mask
    }

    /// Decision rule at stop: argmax of the agent's own belief. Exact ties are
    /// broken toward a hypothesis a peer has declared, then toward a process a
    /// peer sampled last tick, then toward the lowest index. Peer messages are
    /// only consulted when communication is enabled.
    fn decide(&self, agent: usize, visible: &[Message], communication: bool) -> usize {
        let candidates = self.beliefs[agent].argmax_set();
        if candidates.len() == 1 || !communication {
            return candidates[0];
        }
        let peers = || visible.iter().filter(|m| m.sender != agent);
        let declared = peers().find_map(|m| match m.content {
            MessageContent::Declared(d) if candidates.contains(&d) => Some(d),
            _ => None,
        });
        let sampled = || {
            peers().find_map(|m| match m.content {
                MessageContent::LastAction(p) if candidates.contains(&p) => Some(p),
                _ => None,
            })
        };
        declared.or_else(sampled).unwrap_or(candidates[0])
    }

    /// Advance one tick. `actions[k]` must be `Some` exactly for active agents.
    pub fn step(&mut self, config: &EnvConfig, actions: &[Option<AgentAction>]) -> Result<StepOutcome> {
        if self.is_terminal() {
            return Err(Error::contract("episode already finished"));
        }
        let k_agents = self.num_agents();
        if actions.len() != k_agents || config.num_agents() != k_agents {
            return Err(Error::contract(format!(
                "expected {k_agents} action slots, got {}",
                actions.len()
            )));
        }
        for (k, action) in actions.iter().enumerate() {
            match (self.active[k], action) {
                (true, None) => return Err(Error::contract(format!("active agent {k} has no action"))),
                (false, Some(_)) => return Err(Error::contract(format!("agent {k} is inactive"))),
                (true, Some(AgentAction::Sample(local))) if *local >= config.agents[k].processes().len() => {
                    return Err(Error::contract(format!(
                        "agent {k} has no sampling action {local}"
                    )))
                }
                (true, Some(AgentAction::Declare(h))) if *h >= config.num_processes() => {
                    return Err(Error::contract(format!("declaration {h} out of range")))
                }
                _ => {}
            }
        }

        let tick = self.time + 1;
        let forced = tick >= config.max_horizon;
        let visible = self.messages.clone();
        let previous = self.beliefs.clone();
        let cost = -config.sampling_cost;
        let mut steps: Vec<Option<AgentStep>> = vec![None; k_agents];

        for (k, action) in actions.iter().enumerate() {
            let Some(action) = *action else { continue };
            let step = match action {
                AgentAction::Sample(local) if !forced => {
                    let process = config.agents[k].processes()[local];
                    let o = config.observation.draw(process, self.true_hypothesis, &mut self.rng);
                    self.beliefs[k] = self.beliefs[k].update(process, o, &config.observation)?;
                    self.last_sample[k] = Some(process);
                    AgentStep {
                        agent: k,
                        kind: ActionKind::Sample,
                        process: Some(process),
                        observation: Some(o),
                        reward: cost,
                        declaration: None,
                    }
                }
                other => {
                    let (kind, declared) = match other {
                        AgentAction::Declare(h) => (ActionKind::Stop, h),
                        AgentAction::Stop => (ActionKind::Stop, self.decide(k, &visible, config.communication)),
                        AgentAction::Sample(_) => (
                            ActionKind::ForcedStop,
                            self.decide(k, &visible, config.communication),
                        ),
                    };
                    self.active[k] = false;
                    self.stop_times[k] = Some(tick);
                    self.declarations[k] = Some(declared);
                    AgentStep {
                        agent: k,
                        kind,
                        process: None,
                        observation: None,
                        reward: cost,
                        declaration: Some(declared),
                    }
                }
            };
            steps[k] = Some(step);
        }

        for k in 0..k_agents {
            let content = if self.active[k] {
                self.last_sample[k].map_or(MessageContent::Null, MessageContent::LastAction)
            } else {
                let stopped = self.stop_times[k].expect("inactive agent has a stop time");
                match self.declarations[k] {
                    Some(d) if config.message_repeat.covers(stopped, tick + 1) => MessageContent::Declared(d),
                    _ => MessageContent::Null,
                }
            };
            self.messages[k] = Message { sender: k, content };
        }
        self.lagged = previous;
        self.time = tick;

        if self.active.iter().all(|a| !a) {
            self.outcome = Some(self.settle(config)?);
        }
        Ok(StepOutcome {
            tick,
            agents: steps,
            outcome: self.outcome.clone(),
        })
    }

    /// Terminal accounting. `J[w]` is split evenly among the `w` agents that
    /// declared wrongly, so the rewards of all agents add up to `-J` and each
    /// wrong agent carries its own mistake.
    fn settle(&self, config: &EnvConfig) -> Result<EpisodeOutcome> {
        let j = terminal_cost(&self.declarations, self.true_hypothesis, &config.terminal_costs)?;
        let declarations: Vec<usize> = self.declarations.iter().map(|d| d.expect("declared")).collect();
        let num_wrong = declarations.iter().filter(|&&d| d != self.true_hypothesis).count();
        let share = if num_wrong > 0 { j / num_wrong as f64 } else { 0.0 };
        let terminal_rewards = declarations
            .iter()
            .map(|&d| if d != self.true_hypothesis { -share } else { 0.0 })
            .collect();
        Ok(EpisodeOutcome {
            true_hypothesis: self.true_hypothesis,
            stop_times: self.stop_times.iter().map(|t| t.expect("stopped")).collect(),
            declarations,
            num_wrong,
            sampling_cost: config.sampling_cost,
            terminal_cost: j,
            terminal_rewards,
        })
    }
}
