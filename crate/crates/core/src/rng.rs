//! Named random sub-streams.
//!
//! Every stochastic component draws from its own ChaCha8 stream derived from
//! the run seed, a stream tag and an index:
//!
//! ```text
//! stream_seed = splitmix64(splitmix64(seed ^ tag) ^ index)
//! ```
//!
//! Episode `e` of collection round `i` therefore sees the same randomness no
//! matter how many workers share the round, which keeps multi-worker runs
//! identical to single-worker ones.

use rand::SeedableRng;
pub use rand_chacha::ChaCha8Rng;

/// Tags for the independent random streams used by a run.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    /// Environment: true hypothesis and observation noise.
    Env = 0x656e_7600,
    /// Action sampling by stochastic policies.
    Policy = 0x706f_6c00,
    /// Minibatch shuffling inside a training iteration.
    Shuffle = 0x7368_7500,
    /// Network initialisation.
    Init = 0x696e_6900,
    /// Per-iteration collection seed.
    Collect = 0x636f_6c00,
    /// Evaluation rounds.
    Eval = 0x6576_6100,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive the 64-bit seed of sub-stream `(tag, index)` of `seed`.
pub fn derive_seed(seed: u64, tag: Stream, index: u64) -> u64 {
    splitmix64(splitmix64(seed ^ tag as u64) ^ index)
}

/// An RNG positioned at the start of sub-stream `(tag, index)` of `seed`.
pub fn stream(seed: u64, tag: Stream, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, tag, index))
}
