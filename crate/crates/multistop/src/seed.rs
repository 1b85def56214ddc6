//! Deterministic seed derivation for independent substreams.

/// SplitMix64 finalizer. Bijective on u64, used to spread user seeds.
pub(crate) fn splitmix64(state: u64) -> u64 {
    let mut z = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives the seed of substream `index` from a user seed.
///
/// Two rounds of SplitMix64 over the pair keep neighbouring indices
/// uncorrelated, so per-path (or per-purpose) generators can be created
/// independently of iteration order.
pub(crate) fn derive_stream(seed: u64, index: u64) -> u64 {
    splitmix64(splitmix64(seed).wrapping_add(splitmix64(index)))
}
