//! Seeded random streams.
//!
//! Every random draw in the crate comes from a root seed. Each consumer (input
//! signal, initial state, input noise, output noise, oracle experiment) gets
//! its own ChaCha key, and each experiment index its own ChaCha stream under
//! that key, so a given experiment's draws never depend on how many other
//! experiments exist or on the order they are processed in.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Purpose {
    Input,
    InitialState,
    InputNoise,
    OutputNoise,
    Oracle,
    Replicate,
}

impl Purpose {
    fn tag(self) -> u64 {
        match self {
            Purpose::Input => 0x1,
            Purpose::InitialState => 0x2,
            Purpose::InputNoise => 0x3,
            Purpose::OutputNoise => 0x4,
            Purpose::Oracle => 0x5,
            Purpose::Replicate => 0x6,
        }
    }
}

// splitmix64 finalizer
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Independent stream for `(root, purpose, index)`.
pub fn derived(root: u64, purpose: Purpose, index: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(mix(mix(root) ^ purpose.tag()));
    rng.set_stream(index);
    rng
}

/// Derives a child root seed, e.g. one per replicate of a study.
pub fn child_seed(root: u64, index: u64) -> u64 {
    mix(mix(root ^ Purpose::Replicate.tag()).wrapping_add(index))
}
