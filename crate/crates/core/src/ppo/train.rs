use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::nn::{Adam, Mlp};
use crate::ppo::advantage::AdvantageBatch;
use crate::ppo::hyper::PpoHyperparams;
use crate::ppo::kl::AdaptiveKl;
use crate::ppo::objective::{mean_kl, policy_objective, value_loss};
use crate::rng::{stream, Stream};
use crate::rollout::RolloutBuffer;

/// Actor, critic, their optimisers and the KL controller.
#[derive(Clone, Debug)]
pub struct Learner {
    pub actor: Mlp,
    pub critic: Mlp,
    pub actor_opt: Adam,
    pub critic_opt: Adam,
    pub kl: AdaptiveKl,
    pub hyper: PpoHyperparams,
    /// Completed training iterations.
    pub iteration: u64,
}

impl Learner {
    pub fn new(actor: Mlp, critic: Mlp, hyper: PpoHyperparams) -> Result<Self> {
        hyper.validate()?;
        if critic.output_width() != 1 {
            return Err(Error::contract("critic must have a single output"));
        }
        Ok(Self {
            actor_opt: Adam::new(&actor, hyper.policy_lr),
            critic_opt: Adam::new(&critic, hyper.value_lr),
            kl: AdaptiveKl::new(hyper.beta_init),
            actor,
            critic,
            hyper,
            iteration: 0,
        })
    }

    pub fn skipped_updates(&self) -> u64 {
        self.actor_opt.skipped_steps() + self.critic_opt.skipped_steps()
    }
}

/// One row of the per-iteration statistics file.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingStats {
    pub iteration: u64,
    pub policy_loss: f64,
    pub value_loss: f64,
    /// Whole-buffer KL measured after the last epoch.
    pub mean_kl: f64,
    /// Penalty coefficient after this iteration's adaptation.
    pub beta: f64,
    pub clip_fraction: f64,
    /// Mean actor gradient norm before clipping.
    pub grad_norm: f64,
    pub mean_episode_risk: f64,
    pub mean_error_rate: f64,
    pub mean_sample_size: f64,
    /// Optimiser steps refused for non-finite gradients.
    pub skipped_updates: u64,
    /// Transitions dropped from the objective for overflowing ratios.
    pub excluded_transitions: u64,
}

impl TrainingStats {
    pub const CSV_HEADER: [&'static str; 12] = [
        "iteration",
        "policy_loss",
        "value_loss",
        "mean_kl",
        "beta",
        "clip_fraction",
        "grad_norm",
        "mean_episode_risk",
        "mean_error_rate",
        "mean_sample_size",
        "skipped_updates",
        "excluded_transitions",
    ];

    pub fn csv_record(&self) -> Vec<String> {
        vec![
            self.iteration.to_string(),
            self.policy_loss.to_string(),
            self.value_loss.to_string(),
            self.mean_kl.to_string(),
            self.beta.to_string(),
            self.clip_fraction.to_string(),
            self.grad_norm.to_string(),
            self.mean_episode_risk.to_string(),
            self.mean_error_rate.to_string(),
            self.mean_sample_size.to_string(),
            self.skipped_updates.to_string(),
            self.excluded_transitions.to_string(),
        ]
    }
}

/// Multi-epoch minibatch update on one buffer, then a single beta adaptation
/// from the whole-buffer KL. Minibatch order comes from the shuffle stream of
/// `seed` at index `learner.iteration`.
pub fn train_iteration(learner: &mut Learner, buffer: &RolloutBuffer, seed: u64) -> Result<TrainingStats> {
    let hp = learner.hyper.clone();
    let batch = AdvantageBatch::from_buffer(buffer, hp.gamma, hp.lambda)?;
    if batch.policy_inputs.ncols() != learner.actor.input_width() {
        return Err(Error::WidthMismatch {
            expected: format!("policy input width {}", learner.actor.input_width()),
            found: format!("policy input width {}", batch.policy_inputs.ncols()),
        });
    }
    if batch.critic_inputs.ncols() != learner.critic.input_width() {
        return Err(Error::WidthMismatch {
            expected: format!("critic input width {}", learner.critic.input_width()),
            found: format!("critic input width {}", batch.critic_inputs.ncols()),
        });
    }
    let skipped_before = learner.skipped_updates();
    let mut rng = stream(seed, Stream::Shuffle, learner.iteration);
    let mut order: Vec<usize> = (0..batch.len()).collect();
    let (mut p_loss, mut v_loss, mut clip_frac, mut g_norm) = (0.0, 0.0, 0.0, 0.0);
    let mut updates = 0usize;
    let mut excluded = 0u64;

    for _ in 0..hp.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(hp.minibatch) {
            let mb = batch.select(chunk);
            let mut obj = policy_objective(&mb, &learner.actor, learner.kl.beta(), hp.clip_epsilon)?;
            g_norm += obj.grads.clip_norm(hp.max_grad_norm);
            learner.actor_opt.step(&mut learner.actor, &obj.grads)?;
            let (vl, mut vg) = value_loss(&mb, &learner.critic)?;
            vg.clip_norm(hp.max_grad_norm);
            learner.critic_opt.step(&mut learner.critic, &vg)?;
            p_loss += obj.loss;
            v_loss += vl;
            clip_frac += obj.clip_fraction;
            excluded += obj.excluded as u64;
            updates += 1;
        }
    }

    let d = mean_kl(&batch, &learner.actor)?;
    let beta = learner.kl.adapt(d, hp.kl_target, hp.kl_band, hp.beta_factor);
    learner.iteration += 1;
    let n = updates as f64;
    Ok(TrainingStats {
        iteration: learner.iteration,
        policy_loss: p_loss / n,
        value_loss: v_loss / n,
        mean_kl: d,
        beta,
        clip_fraction: clip_frac / n,
        grad_norm: g_norm / n,
        mean_episode_risk: buffer.mean_episode_risk(),
        mean_error_rate: buffer.mean_error_rate(),
        mean_sample_size: buffer.mean_sample_size(),
        skipped_updates: learner.skipped_updates() - skipped_before,
        excluded_transitions: excluded,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::EpisodeOutcome;
    use crate::nn::forward_policy;
    use crate::rollout::Transition;

    fn outcome() -> EpisodeOutcome {
        EpisodeOutcome {
            true_hypothesis: 0,
            stop_times: vec![1],
            declarations: vec![0],
            num_wrong: 0,
            sampling_cost: 0.0,
            terminal_cost: 0.0,
            terminal_rewards: vec![0.0],
        }
    }

    /// One-step bandit: a single fixed state, action 0 pays 1, action 1 pays 0.
    fn bandit_buffer(actor: &Mlp, critic: &Mlp, episodes: u64, seed: u64) -> RolloutBuffer {
        use rand::Rng;
        let mut rng = stream(seed, Stream::Policy, 0);
        let x = vec![1.0, -0.5];
        let mask = vec![true, true];
        let p = forward_policy(actor, &x, &mask).unwrap();
        let v = crate::nn::forward_value(critic, &x).unwrap();
        let mut buf = RolloutBuffer::new();
        for e in 0..episodes {
            let a = if rng.random::<f64>() < p[0] { 0 } else { 1 };
            let t = Transition {
                episode: e,
                agent: 0,
                step: 1,
                policy_input: x.clone(),
                critic_input: x.clone(),
                mask: mask.clone(),
                action: a,
                step_reward: if a == 0 { 1.0 } else { 0.0 },
                terminal_reward: 0.0,
                old_logprob: p[a].ln(),
                old_probs: p.clone(),
                value: v,
                done: true,
            };
            buf.push_episode(e, vec![t], outcome()).unwrap();
        }
        buf
    }

    fn learner(hyper: PpoHyperparams) -> Learner {
        let mut rng = stream(5, Stream::Init, 0);
        let actor = Mlp::new(2, &[8], 2, 0.01, &mut rng);
        let critic = Mlp::new(2, &[8], 1, 1.0, &mut rng);
        Learner::new(actor, critic, hyper).unwrap()
    }

    #[test]
    fn bandit_probability_rises() {
        let mut l = learner(PpoHyperparams {
            minibatch: 32,
            epochs: 4,
            policy_lr: 3e-3,
            ..Default::default()
        });
        let x = [1.0, -0.5];
        let mut prev = forward_policy(&l.actor, &x, &[true, true]).unwrap()[0];
        for it in 0..8 {
            let buf = bandit_buffer(&l.actor, &l.critic, 64, it);
            train_iteration(&mut l, &buf, 1).unwrap();
            let now = forward_policy(&l.actor, &x, &[true, true]).unwrap()[0];
            assert!(now > prev, "iteration {it}: {now} <= {prev}");
            prev = now;
        }
    }

    #[test]
    fn zero_learning_rate_only_halves_beta() {
        let mut l = learner(PpoHyperparams {
            policy_lr: 0.0,
            value_lr: 0.0,
            minibatch: 16,
            ..Default::default()
        });
        let before = (l.actor.params_flat(), l.critic.params_flat());
        let buf = bandit_buffer(&l.actor, &l.critic, 40, 3);
        let stats = train_iteration(&mut l, &buf, 9).unwrap();
        assert_eq!((l.actor.params_flat(), l.critic.params_flat()), before);
        assert_eq!(stats.mean_kl, 0.0);
        assert_eq!(stats.beta, 0.5);
        assert_eq!(stats.iteration, 1);
    }

    #[test]
    fn duplicated_buffer_gives_same_full_batch_update() {
        let hyper = PpoHyperparams {
            epochs: 1,
            minibatch: 1_000_000,
            ..Default::default()
        };
        let mut a = learner(hyper.clone());
        let mut b = learner(hyper);
        let buf = bandit_buffer(&a.actor, &a.critic, 50, 4);
        let mut doubled = buf.clone();
        doubled.merge(buf.clone());
        train_iteration(&mut a, &buf, 2).unwrap();
        train_iteration(&mut b, &doubled, 2).unwrap();
        for (x, y) in a.actor.params_flat().iter().zip(b.actor.params_flat()) {
            assert!((x - y).abs() < 1e-12);
        }
        for (x, y) in a.critic.params_flat().iter().zip(b.critic.params_flat()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn empty_buffer_rejected() {
        let mut l = learner(PpoHyperparams::default());
        assert!(train_iteration(&mut l, &RolloutBuffer::new(), 0).is_err());
    }

    #[test]
    fn deterministic_given_seed() {
        let run = || {
            let mut l = learner(PpoHyperparams {
                minibatch: 8,
                epochs: 3,
                ..Default::default()
            });
            let buf = bandit_buffer(&l.actor, &l.critic, 30, 6);
            let s = train_iteration(&mut l, &buf, 11).unwrap();
            (s, l.actor.params_flat())
        };
        assert_eq!(run(), run());
    }
}
