//! Counter-based random streams.
//!
//! A stream is addressed by `(seed, domain, key, counter)` rather than by
//! draw order, so results do not depend on scheduling or worker count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// 64-bit FNV-1a.
fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Independent ChaCha stream for `(seed, domain, key)` at position `counter`.
pub fn stream(seed: u64, domain: &str, key: &str, counter: u64) -> ChaCha8Rng {
    let mut material = [0u8; 32];
    material[..8].copy_from_slice(&seed.to_le_bytes());
    material[8..16].copy_from_slice(&fnv1a(domain.as_bytes()).to_le_bytes());
    material[16..24].copy_from_slice(&fnv1a(key.as_bytes()).to_le_bytes());
    material[24..].copy_from_slice(&(key.len() as u64).to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(material);
    rng.set_stream(counter);
    rng
}
