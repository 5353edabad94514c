use crate::env::EnvConfig;
use crate::error::{Error, Result};
use crate::nn::{Checkpoint, Mlp, NamedNetwork};
use crate::ppo::hyper::PpoHyperparams;
use crate::ppo::kl::AdaptiveKl;
use crate::ppo::train::{train_iteration, Learner, TrainingStats};
use crate::rng::{derive_seed, stream, Stream};
use crate::rollout::{collect, critic_input_width, policy_input_width, NetworkPolicy};

/// Output gain of the actor's last layer, giving a near-uniform start.
pub const ACTOR_OUTPUT_GAIN: f64 = 0.01;

/// Collect-then-update loop for one environment configuration.
#[derive(Clone, Debug)]
pub struct Trainer {
    pub env: EnvConfig,
    pub learner: Learner,
    pub seed: u64,
    pub workers: usize,
}

impl Trainer {
    pub fn new(env: EnvConfig, hidden: &[usize], hyper: PpoHyperparams, seed: u64, workers: usize) -> Result<Self> {
        env.validate()?;
        let actor = Mlp::new(
            policy_input_width(&env),
            hidden,
            env.num_action_slots(),
            ACTOR_OUTPUT_GAIN,
            &mut stream(seed, Stream::Init, 0),
        );
        let critic = Mlp::new(critic_input_width(&env), hidden, 1, 1.0, &mut stream(seed, Stream::Init, 1));
        Ok(Self {
            learner: Learner::new(actor, critic, hyper)?,
            env,
            seed,
            workers,
        })
    }

    /// Gather `timesteps` transitions with the current actor and update once.
    pub fn iterate(&mut self) -> Result<TrainingStats> {
        let round_seed = derive_seed(self.seed, Stream::Collect, self.learner.iteration);
        let buffer = collect(
            &self.env,
            &self.learner.actor,
            &self.learner.critic,
            self.learner.hyper.timesteps,
            round_seed,
            self.workers,
        )?;
        train_iteration(&mut self.learner, &buffer, self.seed)
    }

    pub fn policy(&self, greedy: bool) -> NetworkPolicy {
        NetworkPolicy::new(self.learner.actor.clone(), greedy)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            networks: vec![
                NamedNetwork {
                    name: "actor".into(),
                    net: self.learner.actor.clone(),
                    optimizer: Some(self.learner.actor_opt.clone()),
                },
                NamedNetwork {
                    name: "critic".into(),
                    net: self.learner.critic.clone(),
                    optimizer: Some(self.learner.critic_opt.clone()),
                },
            ],
            scalars: vec![
                ("beta".into(), self.learner.kl.beta()),
                ("iteration".into(), self.learner.iteration as f64),
            ],
        }
    }

    /// Resume from a checkpoint written by [`Trainer::to_checkpoint`].
    pub fn from_checkpoint(
        env: EnvConfig,
        checkpoint: &Checkpoint,
        hyper: PpoHyperparams,
        seed: u64,
        workers: usize,
    ) -> Result<Self> {
        env.validate()?;
        let (actor, critic) = networks_for(&env, checkpoint)?;
        let mut learner = Learner::new(actor.net.clone(), critic.net.clone(), hyper)?;
        if let Some(opt) = &actor.optimizer {
            learner.actor_opt = opt.clone();
        }
        if let Some(opt) = &critic.optimizer {
            learner.critic_opt = opt.clone();
        }
        if let Some(beta) = checkpoint.scalar("beta").filter(|b| *b > 0.0) {
            learner.kl = AdaptiveKl::new(beta);
        }
        learner.iteration = checkpoint.scalar("iteration").unwrap_or(0.0) as u64;
        Ok(Self {
            env,
            learner,
            seed,
            workers,
        })
    }
}

/// Actor and critic sections of `checkpoint`, checked against `env`.
pub fn networks_for<'a>(env: &EnvConfig, checkpoint: &'a Checkpoint) -> Result<(&'a NamedNetwork, &'a NamedNetwork)> {
    let get = |name: &str| {
        checkpoint.network(name).ok_or_else(|| Error::WidthMismatch {
            expected: format!("a `{name}` network"),
            found: "none in checkpoint".into(),
        })
    };
    let (actor, critic) = (get("actor")?, get("critic")?);
    let want_actor = (policy_input_width(env), env.num_action_slots());
    let have_actor = (actor.net.input_width(), actor.net.output_width());
    if want_actor != have_actor {
        return Err(Error::WidthMismatch {
            expected: format!("actor {} -> {}", want_actor.0, want_actor.1),
            found: format!("actor {} -> {}", have_actor.0, have_actor.1),
        });
    }
    let want_critic = critic_input_width(env);
    if critic.net.input_width() != want_critic || critic.net.output_width() != 1 {
        return Err(Error::WidthMismatch {
            expected: format!("critic {want_critic} -> 1"),
            found: format!("critic {} -> {}", critic.net.input_width(), critic.net.output_width()),
        });
    }
    Ok((actor, critic))
}
