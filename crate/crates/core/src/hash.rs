//! Stable, seedable hashing used by the mock providers and the world generator.
//!
//! `std`'s `DefaultHasher` is not guaranteed stable across releases, so mock
//! output built on it could drift between toolchains.

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// FNV-1a over `bytes`, starting from a state mixed with `seed`.
pub fn fnv1a(seed: u64, bytes: &[u8]) -> u64 {
    let mut h = FNV_OFFSET ^ splitmix64(seed);
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    splitmix64(h)
}

/// Hashes several string parts with a separator so `("ab","c")` and `("a","bc")` differ.
pub fn hash_parts(seed: u64, parts: &[&str]) -> u64 {
    let mut h = splitmix64(seed);
    for p in parts {
        h = fnv1a(h, p.as_bytes());
        h = fnv1a(h, &[0x1f]);
    }
    h
}

pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Maps a hash to a uniform value in `[0, 1)`.
pub fn unit_f64(h: u64) -> f64 {
    (h >> 11) as f64 / (1u64 << 53) as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parts_are_separated() {
        assert_ne!(hash_parts(1, &["ab", "c"]), hash_parts(1, &["a", "bc"]));
        assert_eq!(hash_parts(1, &["ab", "c"]), hash_parts(1, &["ab", "c"]));
        assert_ne!(hash_parts(1, &["x"]), hash_parts(2, &["x"]));
    }

    #[test]
    fn unit_range() {
        for i in 0..1000u64 {
            let u = unit_f64(splitmix64(i));
            assert!((0.0..1.0).contains(&u));
        }
    }
}
