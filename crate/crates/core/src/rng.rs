//! Counter-keyed random streams.
//!
//! Every random draw in the crate comes from a stream identified by a
//! global seed plus a short tuple of counters (iteration, layer, data point,
//! ...). Streams are independent of evaluation order, so any draw can be
//! replayed without replaying the draws before it.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Stream domains. Keeps keys for different purposes from colliding.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum Domain {
    PriorNoise = 1,
    LayerNoise = 2,
    Shuffle = 3,
    Split = 4,
    CosineFeatures = 5,
    Synthetic = 6,
    Test = 7,
}

/// Counter used for draws that stay fixed across training iterations.
pub const FIXED: u64 = u64::MAX;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Folds a seed, a domain and counters into one 64-bit stream key.
pub fn stream_key(seed: u64, domain: Domain, counters: &[u64]) -> u64 {
    let mut h = splitmix(seed ^ 0x5DEE_CE66_D1CE_4E5B);
    h = splitmix(h ^ domain as u64);
    for &c in counters {
        h = splitmix(h ^ c);
    }
    h
}

pub fn stream(seed: u64, domain: Domain, counters: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(stream_key(seed, domain, counters))
}

pub fn normals(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}
