//! Seeding helpers. Every stochastic routine in the crate takes a
//! `&mut impl Rng`; [`seeded`] builds the generator used throughout.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type TcRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> TcRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Mixes a run seed with a stream index (SplitMix64 finalizer), so per-stock
/// generators do not depend on scheduling order.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
