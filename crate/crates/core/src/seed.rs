//! Per-stage seeds derived from one root seed.

/// 64-bit FNV-1a. Stable across platforms and releases, unlike `std`'s
/// `DefaultHasher`.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Seed for a named pipeline stage.
pub fn stage_seed(root: u64, stage: &str) -> u64 {
    fnv1a(stage.as_bytes()) ^ root.rotate_left(17) ^ 0x9e37_79b9_7f4a_7c15
}
