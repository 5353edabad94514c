//! Dense networks with hand-written backpropagation, categorical and scalar
//! heads, Adam and a binary checkpoint format.

mod adam;
pub mod checkpoint;
mod dist;
mod mlp;

pub use adam::Adam;
pub use checkpoint::{Checkpoint, NamedNetwork};
pub use dist::{
    forward_policy, forward_policy_batch, forward_value, forward_value_batch, kl_categorical, log_prob_logit_grad,
    masked_softmax, KL_FLOOR, MASK_PENALTY,
};
pub use mlp::{Activation, Dense, ForwardCache, Gradients, Mlp};
