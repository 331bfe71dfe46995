//! Seeded random number generation.
//!
//! Every stochastic routine in the crate takes an explicit `&mut Rng`. The
//! generator is xoshiro256** with its 256-bit state expanded from a 64-bit
//! seed by splitmix64, so a run is fully determined by its seed and call
//! order.

use rand::{Rng as _, SeedableRng};
use rand_xoshiro::Xoshiro256StarStar;

pub type Rng = Xoshiro256StarStar;

/// Creates a generator from a 64-bit seed (splitmix64 expansion).
pub fn seeded(seed: u64) -> Rng {
    Xoshiro256StarStar::seed_from_u64(seed)
}

/// Derives an independent stream for a labelled sub-task of a seeded run.
pub fn derive(seed: u64, stream: u64) -> Rng {
    // splitmix64 finaliser over the pair
    let mut x = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^= x >> 31;
    seeded(x)
}

/// Samples an index from a probability vector by inverse CDF.
///
/// Rounding overshoot falls back to the last index with positive mass.
pub fn sample_index(probs: &[f64], rng: &mut Rng) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last_positive = i;
            if u < acc {
                return i;
            }
        }
    }
    last_positive
}
