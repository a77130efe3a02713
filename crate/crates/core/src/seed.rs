//! Seed derivation for reproducible, order-independent random streams.
//!
//! Every random signal draws from its own ChaCha20 stream. The 64-bit key is
//! derived from the caller's seed, the stream number from a role tag, so two
//! signals never share a stream and trials can run in any order.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

/// Role of a random stream within one trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Phases,
    GaussianInput,
    OutputNoise,
}

impl Role {
    fn tag(self) -> u64 {
        match self {
            Role::Phases => 0x7068_6173,
            Role::GaussianInput => 0x6761_7573,
            Role::OutputNoise => 0x6e6f_6973,
        }
    }
}

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Combine a parent seed with an index (trial number, grid point, ...).
pub fn derive(seed: u64, index: u64) -> u64 {
    mix64(seed ^ mix64(index.wrapping_add(0x632b_e59b_d9b4_e019)))
}

pub fn stream(seed: u64, role: Role) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(mix64(seed));
    rng.set_stream(role.tag());
    rng
}
