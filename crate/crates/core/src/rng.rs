//! Seedable, portable random streams.
//!
//! Every generator in the crate takes an explicit [`ChaCha8Rng`] handle; there
//! is no global state. Independent streams (per trial, per hop, per purpose)
//! are derived from one experiment seed by hashing the seed together with a
//! list of labels, so the same work unit always sees the same stream no
//! matter in which order (or on which thread) units execute.

pub use rand_chacha::ChaCha8Rng;

use rand::SeedableRng;

/// splitmix64 finalizer; good avalanche behaviour for label mixing.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive a dedicated stream from `seed` and a label path such as
/// `&[trial, hop, purpose]`.
pub fn stream(seed: u64, labels: &[u64]) -> ChaCha8Rng {
    let mut state = mix(seed ^ 0x243f_6a88_85a3_08d3);
    for &l in labels {
        state = mix(state ^ l.wrapping_mul(0x9e37_79b9_7f4a_7c15));
    }
    ChaCha8Rng::seed_from_u64(state)
}

/// Labels for the distinct random purposes inside one experiment trial.
#[derive(Debug, Clone, Copy)]
pub enum Purpose {
    EstimatedChannel,
    ErrorRealization,
}

impl Purpose {
    pub fn label(self) -> u64 {
        match self {
            Purpose::EstimatedChannel => 1,
            Purpose::ErrorRealization => 2,
        }
    }
}
