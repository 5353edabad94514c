//! Frozen-policy evaluation, baseline policies, operating-point sweeps and
//! matched-error comparisons.

mod baselines;
mod compare;
mod metrics;
mod sweep;

use rayon::prelude::*;

pub use baselines::{heuristic_action, HeuristicPolicy, ImmediateStop, Oracle, UniformGuess, UniformRandom};
pub use compare::{compare, compare_curves, ComparisonReport, MATCH_TOLERANCE};
pub use metrics::{mean_se, MetricsRecord};
pub use sweep::{plot_data, read_curve, sweep, write_curve, CurvePoint, SweepKind, SweepPoint, SweepSpec, SweepStatus, CURVE_HEADER};

use crate::env::trace::{TraceRecorder, TraceRow};
use crate::env::{EnvConfig, EpisodeOutcome, EpisodeState};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, stream, Stream};
use crate::rollout::Policy;

/// Play evaluation episode `episode` under `policy`. The environment stream
/// depends only on `(seed, episode)`, so different policies face the same
/// hypotheses and observation noise.
pub fn run_episode(
    policy: &dyn Policy,
    config: &EnvConfig,
    seed: u64,
    episode: u64,
    trace: bool,
) -> Result<(EpisodeOutcome, Option<Vec<TraceRow>>)> {
    let base = derive_seed(seed, Stream::Eval, 0);
    let mut state = EpisodeState::new(config, derive_seed(base, Stream::Env, episode))?;
    let mut rng = stream(base, Stream::Policy, episode);
    let mut recorder = trace.then(TraceRecorder::new);
    loop {
        let mut actions = vec![None; config.num_agents()];
        for (agent, a) in actions.iter_mut().enumerate() {
            if state.is_active(agent) {
                *a = Some(policy.act(config, &state, agent, &mut rng)?);
            }
        }
        let out = state.step(config, &actions)?;
        if let Some(r) = recorder.as_mut() {
            r.record(episode, &out, &state, None);
        }
        if let Some(outcome) = out.outcome {
            let rows = recorder.map(|r| r.finish(&outcome));
            return Ok((outcome, rows));
        }
    }
}

fn run_all(
    policy: &dyn Policy,
    config: &EnvConfig,
    episodes: usize,
    seed: u64,
    workers: usize,
    trace: bool,
) -> Result<Vec<(EpisodeOutcome, Option<Vec<TraceRow>>)>> {
    config.validate()?;
    if episodes == 0 {
        return Err(Error::config("episodes", "must be positive"));
    }
    let run = |e: u64| run_episode(policy, config, seed, e, trace);
    if workers <= 1 {
        return (0..episodes as u64).map(run).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::contract(format!("worker pool: {e}")))?;
    pool.install(|| (0..episodes as u64).into_par_iter().map(run).collect())
}

/// Aggregate metrics of `policy` over `episodes` episodes. Deterministic in
/// `seed` and independent of `workers`.
pub fn evaluate(
    policy: &dyn Policy,
    config: &EnvConfig,
    config_id: &str,
    episodes: usize,
    seed: u64,
    workers: usize,
) -> Result<MetricsRecord> {
    let outcomes: Vec<_> = run_all(policy, config, episodes, seed, workers, false)?
        .into_iter()
        .map(|(o, _)| o)
        .collect();
    Ok(MetricsRecord::from_outcomes(config_id, &outcomes))
}

/// As [`evaluate`], also returning every episode's trace rows in order.
pub fn evaluate_traced(
    policy: &dyn Policy,
    config: &EnvConfig,
    config_id: &str,
    episodes: usize,
    seed: u64,
    workers: usize,
) -> Result<(MetricsRecord, Vec<TraceRow>)> {
    let mut outcomes = Vec::with_capacity(episodes);
    let mut rows = Vec::new();
    for (o, r) in run_all(policy, config, episodes, seed, workers, true)? {
        outcomes.push(o);
        rows.extend(r.unwrap_or_default());
    }
    Ok((MetricsRecord::from_outcomes(config_id, &outcomes), rows))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::default_terminal_costs;
    use crate::nn::Mlp;
    use crate::rollout::{policy_input_width, NetworkPolicy};

    #[test]
    fn oracle_is_exact() {
        let cfg = EnvConfig::independent(5, 2, 0.05).unwrap();
        let m = evaluate(&Oracle, &cfg, "oracle", 200, 1, 1).unwrap();
        assert_eq!(m.error_rate, 0.0);
        assert_eq!(m.avg_sample_size, 1.0);
        assert!((m.bayes_risk - 2.0 * 0.05).abs() < 1e-15);
        assert!(m.risk_se < 1e-12);
    }

    #[test]
    fn immediate_stop_matches_closed_form() {
        let c = 0.05;
        let cfg = EnvConfig::independent(5, 2, c).unwrap();
        let n = 20_000;
        let m = evaluate(&UniformGuess, &cfg, "guess", n, 3, 1).unwrap();
        // Independent uniform guesses: each agent wrong w.p. 0.8.
        let q = 0.8;
        let j = default_terminal_costs(2);
        let expected_j = 2.0 * q * (1.0 - q) * j[1] + q * q * j[2];
        assert!((m.error_rate - q).abs() < 4.0 * m.error_se);
        assert!((m.mean_terminal_cost - expected_j).abs() < 0.05);
        assert!((m.bayes_risk - (2.0 * c + expected_j)).abs() < 4.0 * m.risk_se);

        // Prior argmax declares hypothesis 0, so the error is exactly the
        // chance that the anomaly is elsewhere.
        let s = evaluate(&ImmediateStop, &cfg, "stop", n, 3, 1).unwrap();
        assert!((s.per_agent_error[0] - q).abs() < 4.0 * s.per_agent_error_se[0]);
        assert_eq!(s.per_agent_error[0], s.per_agent_error[1]);
    }

    #[test]
    fn deterministic_and_worker_independent() {
        let cfg = EnvConfig::independent(4, 2, 0.1).unwrap();
        let h = HeuristicPolicy::new(0.9, 4).unwrap();
        let a = evaluate(&h, &cfg, "h", 300, 9, 1).unwrap();
        let b = evaluate(&h, &cfg, "h", 300, 9, 3).unwrap();
        assert_eq!(a, b);
        let c = evaluate(&h, &cfg, "h", 300, 10, 1).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn zero_episodes_rejected() {
        let cfg = EnvConfig::independent(4, 1, 0.1).unwrap();
        assert!(matches!(evaluate(&Oracle, &cfg, "o", 0, 1, 1), Err(Error::Config { .. })));
    }

    #[test]
    fn width_mismatch_is_reported() {
        let cfg = EnvConfig::independent(4, 2, 0.1).unwrap();
        let other = EnvConfig::independent(5, 2, 0.1).unwrap();
        let actor = Mlp::new(
            policy_input_width(&other),
            &[4],
            other.num_action_slots(),
            0.01,
            &mut stream(0, Stream::Init, 0),
        );
        let p = NetworkPolicy::new(actor, true);
        assert!(matches!(evaluate(&p, &cfg, "n", 5, 1, 1), Err(Error::WidthMismatch { .. })));
    }

    #[test]
    fn traced_rows_cover_every_episode() {
        let cfg = EnvConfig::independent(3, 2, 0.2).unwrap();
        let (m, rows) = evaluate_traced(&UniformRandom, &cfg, "r", 20, 4, 1).unwrap();
        let plain = evaluate(&UniformRandom, &cfg, "r", 20, 4, 1).unwrap();
        assert_eq!(m, plain);
        let total: u64 = (0..20).map(|e| rows.iter().filter(|r| r.episode == e).count() as u64).sum();
        assert_eq!(total as usize, rows.len());
        assert!((0..20).all(|e| rows.iter().any(|r| r.episode == e)));
    }
}
