//! Deterministic seed derivation for independent RNG streams.

/// SplitMix64 finalizer; avalanche-mixes a 64-bit value.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed from a base seed and two stream coordinates
/// (e.g. worker id and episode counter). Distinct coordinates give
/// statistically independent streams; the mapping is pure.
pub fn derive(base: u64, stream: u64, index: u64) -> u64 {
    splitmix64(base ^ splitmix64(stream ^ splitmix64(index)))
}
