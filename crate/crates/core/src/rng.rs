//! Deterministic stream derivation for parallel Monte Carlo.
//!
//! Every consumer of randomness gets its own ChaCha8 stream keyed by
//! `(master_seed, replica, stream)`. The key is expanded into a 256-bit
//! seed with SplitMix64, so streams are statistically independent and
//! stable across runs and platforms: the same key always yields the
//! same byte sequence.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Named stream roles within one replica.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    /// Tree shape draws: backbone child counts, trap counts, trap trees.
    TreeGrowth = 0,
    /// Embedding displacement steps.
    Embedding = 1,
    /// Walk neighbor choices.
    Walk = 2,
    /// Auxiliary oracles (rejection sampler, trap excursions, random trees).
    Oracle = 3,
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive the generator for `(master_seed, replica, stream)`.
pub fn stream_rng(master_seed: u64, replica: u64, stream: Stream) -> ChaCha8Rng {
    seeded_rng(master_seed, replica, stream as u64)
}

/// Derive a generator from a raw `(master, replica, stream_id)` key.
pub fn seeded_rng(master_seed: u64, replica: u64, stream_id: u64) -> ChaCha8Rng {
    let mut state = master_seed
        ^ replica.wrapping_mul(0xa076_1d64_78bd_642f)
        ^ stream_id.wrapping_mul(0xe703_7ed1_a0b4_28db);
    let mut seed = [0u8; 32];
    for chunk in seed.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    ChaCha8Rng::from_seed(seed)
}

/// The effective per-replica key, recorded in run manifests.
pub fn replica_key(master_seed: u64, replica: u64) -> u64 {
    let mut state = master_seed ^ replica.wrapping_mul(0xa076_1d64_78bd_642f);
    splitmix64(&mut state)
}
