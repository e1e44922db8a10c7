//! Named random streams split from one master seed.
//!
//! `derive_seed(master, label)` is `splitmix64(master + splitmix64(fnv1a64(label)))`
//! with wrapping arithmetic. The mapping is part of the on-disk reproducibility
//! contract and must not change.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The generator behind every stream.
pub type Stream = ChaCha8Rng;

pub const ENVIRONMENT: &str = "environment";
pub const POLICY_INIT: &str = "policy-init";
pub const EXPLORATION: &str = "exploration-noise";
pub const RELABEL: &str = "relabel-sampling";
pub const FREEZE: &str = "freeze-events";
pub const REPLAY: &str = "replay-sampling";
pub const EVALUATION: &str = "evaluation-environment";
pub const OPENING: &str = "bridge-opening";

pub const LABELS: [&str; 8] = [ENVIRONMENT, POLICY_INIT, EXPLORATION, RELABEL, FREEZE, REPLAY, EVALUATION, OPENING];

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes.iter().fold(FNV_OFFSET, |h, &b| (h ^ b as u64).wrapping_mul(FNV_PRIME))
}

pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn derive_seed(master: u64, label: &str) -> u64 {
    splitmix64(master.wrapping_add(splitmix64(fnv1a64(label.as_bytes()))))
}

pub fn stream(master: u64, label: &str) -> Stream {
    Stream::seed_from_u64(derive_seed(master, label))
}
