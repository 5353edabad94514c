use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Smallest accepted observation noise.
pub const MIN_STD_DEV: f64 = 1e-6;

/// `M` hypotheses, hypothesis `j` meaning "process `j` is anomalous", with a
/// prior over them.
#[derive(Clone, Debug, PartialEq)]
pub struct HypothesisSpace {
    prior: Vec<f64>,
}

impl HypothesisSpace {
    pub fn uniform(num_hypotheses: usize) -> Result<Self> {
        if num_hypotheses < 2 {
            return Err(Error::config(
                "env.num_processes",
                format!("need at least 2 processes, got {num_hypotheses}"),
            ));
        }
        Self::new(vec![1.0 / num_hypotheses as f64; num_hypotheses])
    }

    pub fn new(prior: Vec<f64>) -> Result<Self> {
        if prior.len() < 2 {
            return Err(Error::config("env.prior", "need at least 2 hypotheses"));
        }
        if let Some(p) = prior.iter().find(|p| !(**p > 0.0 && **p < 1.0)) {
            return Err(Error::config(
                "env.prior",
                format!("every prior entry must lie strictly inside (0, 1), found {p}"),
            ));
        }
        let total: f64 = prior.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::config(
                "env.prior",
                format!("prior must sum to 1 within 1e-12, sums to {total}"),
            ));
        }
        Ok(Self { prior })
    }

    pub fn num_hypotheses(&self) -> usize {
        self.prior.len()
    }

    pub fn prior(&self) -> &[f64] {
        &self.prior
    }

    /// Draw a hypothesis index by inverse-CDF sampling of the prior.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (j, p) in self.prior.iter().enumerate() {
            acc += p;
            if u < acc {
                return j;
            }
        }
        self.prior.len() - 1
    }
}

/// Gaussian observation densities shared by every agent: `f = N(normal_mean, σ²)`
/// for normal processes, `g = N(anomalous_mean, σ²)` for the anomalous one.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ObservationModel {
    pub normal_mean: f64,
    pub anomalous_mean: f64,
    pub std_dev: f64,
}

impl Default for ObservationModel {
    fn default() -> Self {
        Self {
            normal_mean: 0.0,
            anomalous_mean: 1.0,
            std_dev: 1.0,
        }
    }
}

impl ObservationModel {
    pub fn new(normal_mean: f64, anomalous_mean: f64, std_dev: f64) -> Result<Self> {
        let model = Self {
            normal_mean,
            anomalous_mean,
            std_dev,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.normal_mean.is_finite() {
            return Err(Error::config("env.normal_mean", "must be finite"));
        }
        if !self.anomalous_mean.is_finite() {
            return Err(Error::config("env.anomalous_mean", "must be finite"));
        }
        if !(self.std_dev.is_finite() && self.std_dev >= MIN_STD_DEV) {
            return Err(Error::config(
                "env.std_dev",
                format!("must be finite and at least {MIN_STD_DEV}, got {}", self.std_dev),
            ));
        }
        if self.normal_mean == self.anomalous_mean {
            return Err(Error::config(
                "env.anomalous_mean",
                "must differ from env.normal_mean, otherwise hypotheses are indistinguishable",
            ));
        }
        Ok(())
    }

    fn density(&self, mean: f64, o: f64) -> f64 {
        let z = (o - mean) / self.std_dev;
        (-0.5 * z * z).exp() / (self.std_dev * (2.0 * PI).sqrt())
    }

    /// Normal density `f(o)`.
    pub fn normal_density(&self, o: f64) -> f64 {
        self.density(self.normal_mean, o)
    }

    /// Anomalous density `g(o)`.
    pub fn anomalous_density(&self, o: f64) -> f64 {
        self.density(self.anomalous_mean, o)
    }

    /// `ln g(o) - ln f(o)`, evaluated without forming either density.
    pub fn log_likelihood_ratio(&self, o: f64) -> f64 {
        let shift = self.anomalous_mean - self.normal_mean;
        let mid = 0.5 * (self.anomalous_mean + self.normal_mean);
        shift * (o - mid) / (self.std_dev * self.std_dev)
    }

    /// Expected log-likelihood-ratio gain of one anomalous sample.
    pub fn kl_divergence(&self) -> f64 {
        let d = self.anomalous_mean - self.normal_mean;
        d * d / (2.0 * self.std_dev * self.std_dev)
    }

    /// Observation from sampling process `sampled_process` when hypothesis
    /// `true_hypothesis` holds.
    pub fn draw<R: Rng + ?Sized>(
        &self,
        sampled_process: usize,
        true_hypothesis: usize,
        rng: &mut R,
    ) -> f64 {
        let mean = if sampled_process == true_hypothesis {
            self.anomalous_mean
        } else {
            self.normal_mean
        };
        let z: f64 = rng.sample(StandardNormal);
        mean + self.std_dev * z
    }
}

/// One agent's sampling capability.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AgentSpec {
    pub id: usize,
    processes: Vec<usize>,
}

impl AgentSpec {
    /// `processes` is sorted and de-duplicated; local action `i` samples
    /// `processes[i]`.
    pub fn new(id: usize, mut processes: Vec<usize>) -> Self {
        processes.sort_unstable();
        processes.dedup();
        Self { id, processes }
    }

    pub fn processes(&self) -> &[usize] {
        &self.processes
    }

    pub fn can_sample(&self, process: usize) -> bool {
        self.processes.binary_search(&process).is_ok()
    }

    /// Global process index of local sampling action `local`.
    pub fn process(&self, local: usize) -> Option<usize> {
        self.processes.get(local).copied()
    }

    pub fn local_index(&self, process: usize) -> Option<usize> {
        self.processes.binary_search(&process).ok()
    }

    /// Local sampling actions plus the stop action.
    pub fn num_actions(&self) -> usize {
        self.processes.len() + 1
    }
}

/// How long a stopped agent keeps broadcasting its declaration.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MessageRepeat {
    UntilEnd,
    Steps(u32),
}

impl MessageRepeat {
    /// Whether a declaration made at tick `stop_time` is still on the channel
    /// at tick `tick`.
    pub fn covers(&self, stop_time: u32, tick: u32) -> bool {
        match *self {
            MessageRepeat::UntilEnd => true,
            MessageRepeat::Steps(n) => tick.saturating_sub(stop_time) <= n,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnvConfig {
    pub hypotheses: HypothesisSpace,
    pub observation: ObservationModel,
    pub agents: Vec<AgentSpec>,
    pub sampling_cost: f64,
    /// `terminal_costs[w]` is the joint cost when `w` agents declare wrongly.
    pub terminal_costs: Vec<f64>,
    pub max_horizon: u32,
    pub message_repeat: MessageRepeat,
    pub communication: bool,
}

impl EnvConfig {
    /// `num_agents` agents that can each sample every process, default costs.
    pub fn independent(num_processes: usize, num_agents: usize, sampling_cost: f64) -> Result<Self> {
        let agents = (0..num_agents)
            .map(|k| AgentSpec::new(k, (0..num_processes).collect()))
            .collect();
        Self::with_agents(num_processes, agents, sampling_cost)
    }

    /// Processes split into `num_agents` contiguous disjoint blocks.
    pub fn no_overlap(num_processes: usize, num_agents: usize, sampling_cost: f64) -> Result<Self> {
        if num_agents == 0 || !num_processes.is_multiple_of(num_agents) {
            return Err(Error::config(
                "env.agent_processes",
                "no-overlap layout needs num_processes divisible by num_agents",
            ));
        }
        let block = num_processes / num_agents;
        let agents = (0..num_agents)
            .map(|k| AgentSpec::new(k, (k * block..(k + 1) * block).collect()))
            .collect();
        Self::with_agents(num_processes, agents, sampling_cost)
    }

    /// Explicit per-agent process lists with defaults for everything else.
    pub fn with_agents(num_processes: usize, agents: Vec<AgentSpec>, sampling_cost: f64) -> Result<Self> {
        let k = agents.len();
        let config = Self {
            hypotheses: HypothesisSpace::uniform(num_processes)?,
            observation: ObservationModel::default(),
            agents,
            sampling_cost,
            terminal_costs: default_terminal_costs(k),
            max_horizon: 200,
            message_repeat: MessageRepeat::UntilEnd,
            communication: true,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn num_processes(&self) -> usize {
        self.hypotheses.num_hypotheses()
    }

    pub fn num_agents(&self) -> usize {
        self.agents.len()
    }

    /// Width of the shared policy head: one slot per global process plus stop.
    pub fn num_action_slots(&self) -> usize {
        self.num_processes() + 1
    }

    pub fn stop_slot(&self) -> usize {
        self.num_processes()
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.num_processes();
        self.observation.validate()?;
        if self.agents.is_empty() {
            return Err(Error::config("env.num_agents", "need at least one agent"));
        }
        let mut covered = vec![false; m];
        for (k, agent) in self.agents.iter().enumerate() {
            if agent.id != k {
                return Err(Error::config(
                    "env.agent_processes",
                    format!("agent at position {k} carries id {}", agent.id),
                ));
            }
            if agent.processes.is_empty() {
                return Err(Error::config(
                    "env.agent_processes",
                    format!("agent {k} has no sampleable process"),
                ));
            }
            for &p in &agent.processes {
                if p >= m {
                    return Err(Error::config(
                        "env.agent_processes",
                        format!("agent {k} lists process {p} but only {m} processes exist"),
                    ));
                }
                covered[p] = true;
            }
        }
        if let Some(p) = covered.iter().position(|c| !c) {
            return Err(Error::config(
                "env.agent_processes",
                format!("process {p} cannot be sampled by any agent"),
            ));
        }
        if !(self.sampling_cost.is_finite() && self.sampling_cost >= 0.0) {
            return Err(Error::config(
                "env.sampling_cost",
                format!("must be finite and non-negative, got {}", self.sampling_cost),
            ));
        }
        let k = self.agents.len();
        if self.terminal_costs.len() != k + 1 {
            return Err(Error::config(
                "env.terminal_cost_table",
                format!("needs {} entries (0..={k} wrong agents), got {}", k + 1, self.terminal_costs.len()),
            ));
        }
        if self.terminal_costs[0] != 0.0 {
            return Err(Error::config("env.terminal_cost_table", "entry 0 must be 0"));
        }
        if self.terminal_costs.iter().any(|j| !j.is_finite())
            || self.terminal_costs.windows(2).any(|w| w[1] <= w[0])
        {
            return Err(Error::config(
                "env.terminal_cost_table",
                "must be finite and strictly increasing in the number of wrong agents",
            ));
        }
        if self.max_horizon == 0 {
            return Err(Error::config("env.max_horizon", "must be positive"));
        }
        if self.message_repeat == MessageRepeat::Steps(0) {
            return Err(Error::config("env.message_repeat", "must be positive or \"until_end\""));
        }
        Ok(())
    }
}

/// `J[w] = w`.
pub fn default_terminal_costs(num_agents: usize) -> Vec<f64> {
    (0..=num_agents).map(|w| w as f64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Stream};

    #[test]
    fn rejects_bad_prior() {
        assert!(HypothesisSpace::new(vec![1.0, 0.0]).is_err());
        assert!(HypothesisSpace::new(vec![0.5, 0.6]).is_err());
        assert!(HypothesisSpace::new(vec![0.3, 0.7]).is_ok());
    }

    #[test]
    fn rejects_indistinguishable_model() {
        let err = ObservationModel::new(1.0, 1.0, 1.0).unwrap_err();
        assert!(err.to_string().contains("env.anomalous_mean"));
        assert!(ObservationModel::new(0.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn rejects_uncovered_process() {
        let agents = vec![AgentSpec::new(0, vec![0, 1]), AgentSpec::new(1, vec![1, 2])];
        let err = EnvConfig::with_agents(4, agents, 0.05).unwrap_err();
        assert!(err.to_string().contains("process 3"), "{err}");
    }

    #[test]
    fn rejects_non_increasing_terminal_costs() {
        let mut cfg = EnvConfig::independent(5, 2, 0.05).unwrap();
        cfg.terminal_costs = vec![0.0, 1.0, 1.0];
        assert!(cfg.validate().is_err());
        cfg.terminal_costs = vec![0.5, 1.0, 2.0];
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn no_overlap_layout() {
        let cfg = EnvConfig::no_overlap(10, 2, 0.05).unwrap();
        assert_eq!(cfg.agents[0].processes(), &[0, 1, 2, 3, 4]);
        assert_eq!(cfg.agents[1].processes(), &[5, 6, 7, 8, 9]);
        assert_eq!(cfg.agents[1].local_index(7), Some(2));
        assert_eq!(cfg.agents[1].process(2), Some(7));
    }

    #[test]
    fn degenerate_noise_returns_mean() {
        let model = ObservationModel::new(0.0, 1.0, MIN_STD_DEV).unwrap();
        let mut rng = stream(1, Stream::Env, 0);
        let o = model.draw(3, 3, &mut rng);
        assert!((o - 1.0).abs() < 1e-4);
    }

    #[test]
    fn observation_moments() {
        // Moment-matching oracle: 1e5 draws, SE of the mean is ~0.003.
        let model = ObservationModel::default();
        let mut rng = stream(2, Stream::Env, 0);
        let n = 100_000;
        let normal: Vec<f64> = (0..n).map(|_| model.draw(0, 1, &mut rng)).collect();
        let mean = normal.iter().sum::<f64>() / n as f64;
        let var = normal.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!(mean.abs() < 0.02, "{mean}");
        assert!((var - 1.0).abs() < 0.02, "{var}");
        let anomalous = (0..n).map(|_| model.draw(1, 1, &mut rng)).sum::<f64>() / n as f64;
        assert!((anomalous - 1.0).abs() < 0.02, "{anomalous}");
    }

    #[test]
    fn prior_sampling_frequency() {
        let space = HypothesisSpace::new(vec![0.3, 0.7]).unwrap();
        let mut rng = stream(3, Stream::Env, 0);
        let n = 100_000;
        let zeros = (0..n).filter(|_| space.sample(&mut rng) == 0).count();
        let freq = zeros as f64 / n as f64;
        assert!((freq - 0.3).abs() < 0.01, "{freq}");
    }

    #[test]
    fn llr_matches_density_ratio() {
        let model = ObservationModel::new(-0.5, 2.0, 1.7).unwrap();
        for o in [-3.0, -0.1, 0.75, 4.2] {
            let direct = (model.anomalous_density(o) / model.normal_density(o)).ln();
            assert!((direct - model.log_likelihood_ratio(o)).abs() < 1e-12);
        }
    }

    #[test]
    fn message_repeat_window() {
        assert!(MessageRepeat::UntilEnd.covers(3, 100));
        assert!(MessageRepeat::Steps(2).covers(3, 5));
        assert!(!MessageRepeat::Steps(2).covers(3, 6));
    }
}
