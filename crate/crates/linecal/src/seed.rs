//! Deterministic seed derivation.
//!
//! Every random stream in the crate is keyed by a base seed plus a list of
//! stable tags (bus ids, branch endpoints, run indices, purpose labels).
//! Derived seeds do not depend on iteration order or thread schedule, so
//! campaigns reproduce bit-exactly under any parallel execution.

/// splitmix64 step; good avalanche, cheap, stable across platforms.
fn splitmix64(state: u64) -> u64 {
    let mut z = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Fold a list of tags into a base seed.
pub fn mix(base: u64, tags: &[u64]) -> u64 {
    let mut s = splitmix64(base);
    for &t in tags {
        s = splitmix64(s ^ splitmix64(t));
    }
    s
}

/// FNV-1a hash of a label, for naming sub-streams.
pub fn tag(label: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    h
}
