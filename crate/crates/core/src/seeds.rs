//! Per-purpose random streams derived from one master seed.
//!
//! Every random draw in a run comes from a stream keyed by
//! `(master, purpose, index)`, so changing how many values one consumer
//! draws never shifts another consumer's sequence.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Purpose {
    Graph,
    Drift,
    Initial,
    Reset,
    Disturbance,
    Phase,
    Batch,
    CertificateSearch,
}

impl Purpose {
    fn tag(self) -> u64 {
        match self {
            Purpose::Graph => 0x6772_6170_6800_0001,
            Purpose::Drift => 0x6472_6966_7400_0002,
            Purpose::Initial => 0x696e_6974_0000_0003,
            Purpose::Reset => 0x7265_7365_7400_0004,
            Purpose::Disturbance => 0x6469_7374_0000_0005,
            Purpose::Phase => 0x7068_6173_6500_0006,
            Purpose::Batch => 0x6261_7463_6800_0007,
            Purpose::CertificateSearch => 0x6365_7274_0000_0008,
        }
    }
}

/// SplitMix64 finalizer.
pub fn mix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

pub fn derive_seed(master: u64, purpose: Purpose, index: u64) -> u64 {
    mix64(mix64(master ^ purpose.tag()).wrapping_add(mix64(index)))
}

pub fn stream(master: u64, purpose: Purpose, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, purpose, index))
}

/// Uniform in [0, 1) from the top 53 bits of a hashed counter.
pub fn unit_from_counter(key: u64, counter: u64) -> f64 {
    let bits = mix64(key ^ mix64(counter.wrapping_mul(0xd1b5_4a32_d192_ed03)));
    (bits >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}
