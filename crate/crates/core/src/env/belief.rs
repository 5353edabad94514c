use crate::env::config::ObservationModel;
use crate::error::{Error, Result};

/// Entries are floored here before the final renormalisation so a run of
/// extreme observations can never drive a hypothesis to an absorbing zero.
pub const BELIEF_FLOOR: f64 = 1e-12;

/// Posterior probability of each hypothesis held by one agent.
#[derive(Clone, Debug, PartialEq)]
pub struct Belief {
    probs: Vec<f64>,
}

impl Belief {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() || probs.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::contract("belief entries must be finite and non-negative"));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::contract(format!("belief sums to {total}, expected 1")));
        }
        Ok(Self { probs })
    }

    pub fn from_prior(prior: &[f64]) -> Self {
        Self {
            probs: prior.to_vec(),
        }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn max(&self) -> f64 {
        self.probs.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Index of the largest entry, lowest index on ties.
    pub fn argmax(&self) -> usize {
        let max = self.max();
        self.probs.iter().position(|&p| p == max).unwrap_or(0)
    }

    /// Every index attaining the maximum, ascending.
    pub fn argmax_set(&self) -> Vec<usize> {
        let max = self.max();
        (0..self.probs.len()).filter(|&j| self.probs[j] == max).collect()
    }

    /// Bayes update after observing `o` from process `sampled`: entry
    /// `sampled` is weighted by `g(o)`, every other entry by `f(o)`, and the
    /// result divided by the mixture `(1 - P_i) f(o) + P_i g(o)`.
    ///
    /// Weights are applied as `exp(l - max(l, 0))` with `l = ln g/f`, which is
    /// the same posterior without under- or overflowing either density.
    pub fn update(&self, sampled: usize, o: f64, model: &ObservationModel) -> Result<Belief> {
        if sampled >= self.probs.len() {
            return Err(Error::contract(format!(
                "sampled process {sampled} outside 0..{}",
                self.probs.len()
            )));
        }
        if !o.is_finite() {
            return Err(Error::contract(format!("non-finite observation {o}")));
        }
        let llr = model.log_likelihood_ratio(o);
        let (w_sampled, w_other) = if llr > 0.0 {
            (1.0, (-llr).exp())
        } else {
            (llr.exp(), 1.0)
        };
        let mut probs: Vec<f64> = self
            .probs
            .iter()
            .enumerate()
            .map(|(j, &p)| if j == sampled { p * w_sampled } else { p * w_other })
            .collect();
        normalize(&mut probs);
        if probs.iter().any(|&p| p < BELIEF_FLOOR) {
            for p in probs.iter_mut() {
                *p = p.max(BELIEF_FLOOR);
            }
            normalize(&mut probs);
        }
        Ok(Belief { probs })
    }
}

fn normalize(probs: &mut [f64]) {
    let total: f64 = probs.iter().sum();
    for p in probs.iter_mut() {
        *p /= total;
    }
}
