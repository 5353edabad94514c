use serde::Serialize;

use crate::env::EpisodeOutcome;

/// Mean and standard error (sample standard deviation over `sqrt(n)`).
pub fn mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Aggregate performance of a frozen policy over a set of episodes.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricsRecord {
    pub config_id: String,
    pub num_episodes: usize,
    pub num_agents: usize,
    pub sampling_cost: f64,
    /// Fraction of wrong declarations, averaged over agents.
    pub error_rate: f64,
    pub error_se: f64,
    pub per_agent_error: Vec<f64>,
    pub per_agent_error_se: Vec<f64>,
    /// Mean stop time, averaged over agents.
    pub avg_sample_size: f64,
    pub sample_se: f64,
    pub per_agent_sample_size: Vec<f64>,
    /// Mean of `c * sum(tau) + J` per episode.
    pub bayes_risk: f64,
    pub risk_se: f64,
    pub mean_terminal_cost: f64,
}

impl MetricsRecord {
    pub fn from_outcomes(config_id: impl Into<String>, outcomes: &[EpisodeOutcome]) -> Self {
        let k = outcomes.first().map_or(0, |o| o.num_agents());
        let c = outcomes.first().map_or(0.0, |o| o.sampling_cost);
        let per_episode = |f: &dyn Fn(&EpisodeOutcome) -> f64| outcomes.iter().map(f).collect::<Vec<_>>();
        let (error_rate, error_se) =
            mean_se(&per_episode(&|o| o.num_wrong as f64 / o.num_agents() as f64));
        let (avg_sample_size, sample_se) =
            mean_se(&per_episode(&|o| o.total_samples() as f64 / o.num_agents() as f64));
        let (bayes_risk, risk_se) = mean_se(&per_episode(&|o| o.risk()));
        let (mean_terminal_cost, _) = mean_se(&per_episode(&|o| o.terminal_cost));
        let mut per_agent_error = Vec::with_capacity(k);
        let mut per_agent_error_se = Vec::with_capacity(k);
        let mut per_agent_sample_size = Vec::with_capacity(k);
        for a in 0..k {
            let (e, se) = mean_se(&per_episode(&|o| if o.is_wrong(a) { 1.0 } else { 0.0 }));
            per_agent_error.push(e);
            per_agent_error_se.push(se);
            per_agent_sample_size.push(mean_se(&per_episode(&|o| o.stop_times[a] as f64)).0);
        }
        Self {
            config_id: config_id.into(),
            num_episodes: outcomes.len(),
            num_agents: k,
            sampling_cost: c,
            error_rate,
            error_se,
            per_agent_error,
            per_agent_error_se,
            avg_sample_size,
            sample_se,
            per_agent_sample_size,
            bayes_risk,
            risk_se,
            mean_terminal_cost,
        }
    }

    pub const CSV_HEADER: [&'static str; 10] = [
        "config_id",
        "episodes",
        "error_rate",
        "error_se",
        "avg_sample_size",
        "sample_se",
        "bayes_risk",
        "risk_se",
        "per_agent_error",
        "per_agent_sample_size",
    ];

    pub fn csv_record(&self) -> Vec<String> {
        let join = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(";");
        vec![
            self.config_id.clone(),
            self.num_episodes.to_string(),
            self.error_rate.to_string(),
            self.error_se.to_string(),
            self.avg_sample_size.to_string(),
            self.sample_se.to_string(),
            self.bayes_risk.to_string(),
            self.risk_se.to_string(),
            join(&self.per_agent_error),
            join(&self.per_agent_sample_size),
        ]
    }

    pub fn summary(&self) -> String {
        format!(
            "{}: {} episodes, error rate {:.4} ± {:.4}, avg sample size {:.3} ± {:.3}, Bayes risk {:.4} ± {:.4}",
            self.config_id,
            self.num_episodes,
            self.error_rate,
            self.error_se,
            self.avg_sample_size,
            self.sample_se,
            self.bayes_risk,
            self.risk_se
        )
    }
}
