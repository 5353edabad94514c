//! Trace replay into per-agent long-format tables:
//!
//! - `agent{k}_beliefs.csv`: `episode,step,belief_0..belief_{M-1}`
//! - `agent{k}_actions.csv`: `episode,step,action,process`
//! - `agent{k}_observations.csv`: `episode,step,process,observation`
//!
//! Each belief row is recomputed from the prior and the agent's own
//! observations and must agree with the stored one.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;

use crate::env::trace::{read_trace, TraceRow};
use crate::env::{ActionKind, Belief, EnvConfig, ObservationModel};
use crate::error::{Error, Result};

/// Largest tolerated gap between a stored and a re-derived belief entry.
pub const REPLAY_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct ReplaySummary {
    pub rows: usize,
    pub episodes: usize,
    pub agents: usize,
    pub max_belief_gap: f64,
}

impl fmt::Display for ReplaySummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "replayed {} rows over {} episodes and {} agents; largest belief gap {:.3e}",
            self.rows, self.episodes, self.agents, self.max_belief_gap
        )
    }
}

fn check_rows(rows: &[TraceRow], m: usize, prior: &[f64], model: &ObservationModel) -> Result<f64> {
    let mut beliefs: BTreeMap<(u64, usize), Belief> = BTreeMap::new();
    let mut gap = 0.0f64;
    for (i, row) in rows.iter().enumerate() {
        let line = i as u64 + 2;
        let bad = |reason: String| Error::Trace { line, reason };
        let current = beliefs.entry((row.episode, row.agent)).or_insert_with(|| Belief::from_prior(prior));
        if row.action_kind == ActionKind::Sample {
            let (p, o) = row
                .global_process
                .zip(row.observation)
                .ok_or_else(|| bad("sample row without process and observation".into()))?;
            if p >= m {
                return Err(bad(format!("process {p} out of range")));
            }
            *current = current.update(p, o, model).map_err(|e| bad(e.to_string()))?;
        }
        for (j, (&stored, &derived)) in row.beliefs.iter().zip(current.probs()).enumerate() {
            let d = (stored - derived).abs();
            gap = gap.max(d);
            if d > REPLAY_TOLERANCE {
                return Err(bad(format!("belief_{j} is {stored} but the observations give {derived}")));
            }
        }
    }
    Ok(gap)
}

/// Split `trace` into per-agent tables under `out_dir`. `config` supplies
/// the prior and observation model (uniform prior and unit-variance
/// Gaussians with means 0 and 1 when absent).
pub fn replay(trace: &Path, out_dir: &Path, config: Option<&EnvConfig>) -> Result<ReplaySummary> {
    let text = fs::read_to_string(trace).map_err(|e| Error::config("--trace", format!("{}: {e}", trace.display())))?;
    fs::create_dir_all(out_dir)?;
    if text.trim().is_empty() {
        return Ok(ReplaySummary {
            rows: 0,
            episodes: 0,
            agents: 0,
            max_belief_gap: 0.0,
        });
    }
    let (m, rows) = read_trace(text.as_bytes())?;
    let (prior, model) = match config {
        Some(c) if c.num_processes() == m => (c.hypotheses.prior().to_vec(), c.observation),
        Some(c) => {
            return Err(Error::Trace {
                line: 1,
                reason: format!("trace has {m} belief columns, configuration has {} processes", c.num_processes()),
            })
        }
        None => (vec![1.0 / m as f64; m], ObservationModel::default()),
    };
    let gap = check_rows(&rows, m, &prior, &model)?;

    let agents: Vec<usize> = {
        let mut a: Vec<usize> = rows.iter().map(|r| r.agent).collect();
        a.sort_unstable();
        a.dedup();
        a
    };
    for &k in &agents {
        let mine: Vec<&TraceRow> = rows.iter().filter(|r| r.agent == k).collect();
        let mut b = csv::Writer::from_path(out_dir.join(format!("agent{k}_beliefs.csv")))?;
        let mut header = vec!["episode".to_string(), "step".to_string()];
        header.extend((0..m).map(|j| format!("belief_{j}")));
        b.write_record(&header)?;
        let mut a = csv::Writer::from_path(out_dir.join(format!("agent{k}_actions.csv")))?;
        a.write_record(["episode", "step", "action", "process"])?;
        let mut o = csv::Writer::from_path(out_dir.join(format!("agent{k}_observations.csv")))?;
        o.write_record(["episode", "step", "process", "observation"])?;
        for r in mine {
            let (e, s) = (r.episode.to_string(), r.step.to_string());
            let mut rec = vec![e.clone(), s.clone()];
            rec.extend(r.beliefs.iter().map(|x| x.to_string()));
            b.write_record(&rec)?;
            let process = r.global_process.map(|p| p.to_string()).unwrap_or_default();
            a.write_record([e.as_str(), s.as_str(), r.action_kind.as_str(), process.as_str()])?;
            if let (Some(p), Some(obs)) = (r.global_process, r.observation) {
                o.write_record([e, s, p.to_string(), obs.to_string()])?;
            }
        }
        b.flush()?;
        a.flush()?;
        o.flush()?;
    }
    let mut episodes: Vec<u64> = rows.iter().map(|r| r.episode).collect();
    episodes.sort_unstable();
    episodes.dedup();
    Ok(ReplaySummary {
        rows: rows.len(),
        episodes: episodes.len(),
        agents: agents.len(),
        max_belief_gap: gap,
    })
}
