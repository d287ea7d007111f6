//! Per-sentence random streams.
//!
//! Every random decision about a sentence draws from a generator seeded by
//! `hash(global seed, sentence id, purpose)`, so results do not depend on
//! scheduling or on how many threads process the corpus.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// FNV-1a over the seed and each part, with a separator byte between parts
/// so `["ab", "c"]` and `["a", "bc"]` differ.
pub fn stream_seed(seed: u64, parts: &[&str]) -> u64 {
    let mut hash = FNV_OFFSET;
    let mut feed = |bytes: &[u8]| {
        for &b in bytes {
            hash ^= u64::from(b);
            hash = hash.wrapping_mul(FNV_PRIME);
        }
    };
    feed(&seed.to_le_bytes());
    for part in parts {
        feed(&[0xff]);
        feed(part.as_bytes());
    }
    hash
}

pub fn stream_rng(seed: u64, parts: &[&str]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(stream_seed(seed, parts))
}
