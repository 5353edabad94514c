use ndarray::Array2;

use crate::error::{Error, Result};
use crate::rollout::RolloutBuffer;

/// `eta_t = r_t + gamma V(s_{t+1}) - V(s_t)`. `values` holds one entry more
/// than `rewards`; its last entry is the bootstrap value (0 for an episode
/// that really ended, `V(s_T)` for a truncated one).
pub fn td_errors(rewards: &[f64], values: &[f64], gamma: f64) -> Result<Vec<f64>> {
    if values.len() != rewards.len() + 1 {
        return Err(Error::contract(format!(
            "{} values for {} rewards, expected one more",
            values.len(),
            rewards.len()
        )));
    }
    Ok(rewards
        .iter()
        .enumerate()
        .map(|(t, r)| r + gamma * values[t + 1] - values[t])
        .collect())
}

/// `A_t = eta_t + gamma lambda A_{t+1}` over one trajectory.
pub fn gae(td: &[f64], gamma: f64, lambda: f64) -> Vec<f64> {
    let mut out = vec![0.0; td.len()];
    let mut acc = 0.0;
    for t in (0..td.len()).rev() {
        acc = td[t] + gamma * lambda * acc;
        out[t] = acc;
    }
    out
}

/// Learner-side view of a buffer: inputs stacked into matrices plus the
/// per-transition advantage and value target.
#[derive(Clone, Debug, PartialEq)]
pub struct AdvantageBatch {
    pub policy_inputs: Array2<f64>,
    pub critic_inputs: Array2<f64>,
    pub masks: Vec<Vec<bool>>,
    pub actions: Vec<usize>,
    /// Normalised to mean 0, standard deviation 1 over the batch.
    pub advantages: Vec<f64>,
    pub raw_advantages: Vec<f64>,
    /// `raw advantage + old value`.
    pub targets: Vec<f64>,
    pub old_values: Vec<f64>,
    pub old_logprobs: Vec<f64>,
    pub old_probs: Array2<f64>,
}

fn stack(rows: impl ExactSizeIterator<Item = Vec<f64>>, what: &str) -> Result<Array2<f64>> {
    let n = rows.len();
    let mut width = None;
    let mut flat = Vec::new();
    for r in rows {
        match width {
            None => width = Some(r.len()),
            Some(w) if w != r.len() => return Err(Error::contract(format!("ragged {what} rows"))),
            _ => {}
        }
        flat.extend(r);
    }
    Ok(Array2::from_shape_vec((n, width.unwrap_or(0)), flat).expect("shape checked"))
}

impl AdvantageBatch {
    /// GAE per agent trajectory, never crossing an episode or agent boundary.
    /// A trajectory whose last transition is not `done` bootstraps from its
    /// own last value.
    pub fn from_buffer(buffer: &RolloutBuffer, gamma: f64, lambda: f64) -> Result<Self> {
        if buffer.is_empty() {
            return Err(Error::contract("empty rollout buffer"));
        }
        let ts = buffer.transitions();
        let mut raw = vec![f64::NAN; ts.len()];
        for traj in buffer.agent_trajectories() {
            let rewards: Vec<f64> = traj.iter().map(|&i| ts[i].reward()).collect();
            let mut values: Vec<f64> = traj.iter().map(|&i| ts[i].value).collect();
            let last = &ts[*traj.last().expect("non-empty")];
            values.push(if last.done { 0.0 } else { last.value });
            let adv = gae(&td_errors(&rewards, &values, gamma)?, gamma, lambda);
            for (&i, a) in traj.iter().zip(adv) {
                raw[i] = a;
            }
        }
        if raw.iter().any(|a| !a.is_finite()) {
            return Err(Error::contract("non-finite or unassigned advantage"));
        }
        let old_values: Vec<f64> = ts.iter().map(|t| t.value).collect();
        let targets = raw.iter().zip(&old_values).map(|(a, v)| a + v).collect();
        Ok(Self {
            policy_inputs: stack(ts.iter().map(|t| t.policy_input.clone()), "policy input")?,
            critic_inputs: stack(ts.iter().map(|t| t.critic_input.clone()), "critic input")?,
            masks: ts.iter().map(|t| t.mask.clone()).collect(),
            actions: ts.iter().map(|t| t.action).collect(),
            advantages: normalize(&raw),
            raw_advantages: raw,
            targets,
            old_values,
            old_logprobs: ts.iter().map(|t| t.old_logprob).collect(),
            old_probs: stack(ts.iter().map(|t| t.old_probs.clone()), "old distribution")?,
        })
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    /// Rows `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Self {
        let pick = |v: &[f64]| indices.iter().map(|&i| v[i]).collect::<Vec<_>>();
        Self {
            policy_inputs: self.policy_inputs.select(ndarray::Axis(0), indices),
            critic_inputs: self.critic_inputs.select(ndarray::Axis(0), indices),
            masks: indices.iter().map(|&i| self.masks[i].clone()).collect(),
            actions: indices.iter().map(|&i| self.actions[i]).collect(),
            advantages: pick(&self.advantages),
            raw_advantages: pick(&self.raw_advantages),
            targets: pick(&self.targets),
            old_values: pick(&self.old_values),
            old_logprobs: pick(&self.old_logprobs),
            old_probs: self.old_probs.select(ndarray::Axis(0), indices),
        }
    }
}

/// `(a - mean) / (std + 1e-8)` with the population standard deviation.
pub fn normalize(values: &[f64]) -> Vec<f64> {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let sd = var.sqrt() + 1e-8;
    values.iter().map(|v| (v - mean) / sd).collect()
}
