//! Proximal policy optimisation with a clipped surrogate, an adaptive KL
//! penalty and generalised advantage estimation.

mod advantage;
mod hyper;
mod kl;
mod objective;
mod train;
mod trainer;

pub use advantage::{gae, normalize, td_errors, AdvantageBatch};
pub use hyper::PpoHyperparams;
pub use kl::{AdaptiveKl, KlEvent};
pub use objective::{mean_kl, policy_objective, value_loss, PolicyObjective, MAX_LOG_RATIO};
pub use train::{train_iteration, Learner, TrainingStats};
pub use trainer::{networks_for, Trainer, ACTOR_OUTPUT_GAIN};
