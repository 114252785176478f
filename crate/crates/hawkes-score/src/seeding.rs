//! Counter-based seed derivation for reproducible parallel Monte Carlo.
//!
//! Each replicate (or internal substream) gets a seed that is a pure function
//! of the master seed and its index, so replicate k's random stream never
//! depends on the total replicate count or on scheduling order.

/// Derive a child seed from a master seed and a stream index using the
/// SplitMix64 finalizer over the pair.
pub fn derive_seed(master: u64, stream: u64) -> u64 {
    let mut z = master ^ stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
