//! Small keyed mixing functions shared by the lazily-evaluated tables
//! (next-message tables, tree-code labels, seed derivation).

#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[inline]
pub fn absorb(state: u64, word: u64) -> u64 {
    mix64(state.rotate_left(23) ^ mix64(word))
}

/// Derives an independent sub-seed from a master seed and a tag path.
pub fn derive_seed(master: u64, tags: &[u64]) -> u64 {
    tags.iter().fold(mix64(master), |s, &t| absorb(s, t))
}
