//! Keyed hashing with two live generations and a sweeping frontier.
//!
//! All randomness flows from a single 64-bit master seed. A generation is a
//! numbered hash function; its seed is derived from the master seed and its
//! number, so the full sequence of hash functions is reproducible.
//!
//! The hash functions are seeded pseudorandom mixers, not cryptographic
//! PRFs. Resistance to an adversary that reverse-engineers the hash is
//! assumed, not provided.

use std::collections::HashMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::bits::BitString;
use crate::params::Params;

/// Stafford's variant 13 of the splitmix64 finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

/// Produces 64-bit hash blocks for a key.
pub trait KeyHasher: Clone + Send + Sync + 'static {
    fn block(&self, seed: u64, element: u64, index: u32) -> u64;
}

/// The default keyed mixing function.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MixHasher;

impl KeyHasher for MixHasher {
    #[inline]
    fn block(&self, seed: u64, element: u64, index: u32) -> u64 {
        let e = mix64(element ^ (index as u64 + 1).wrapping_mul(GOLDEN));
        mix64(e ^ seed.rotate_left(17)).wrapping_add(seed)
    }
}

/// Hashes chosen keys as if they were other keys, producing exact full-hash
/// ties on demand. Used to exercise the tie fallback.
#[derive(Debug, Clone, Default)]
pub struct AliasHasher {
    aliases: Arc<HashMap<u64, u64>>,
}

impl AliasHasher {
    /// Each `(key, target)` pair makes `key` hash exactly like `target`.
    pub fn new(pairs: impl IntoIterator<Item = (u64, u64)>) -> Self {
        AliasHasher {
            aliases: Arc::new(pairs.into_iter().collect()),
        }
    }
}

impl KeyHasher for AliasHasher {
    fn block(&self, seed: u64, element: u64, index: u32) -> u64 {
        let element = self.aliases.get(&element).copied().unwrap_or(element);
        MixHasher.block(seed, element, index)
    }
}

/// Which independent hash stream of a generation is meant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Stream {
    /// Fingerprints in the primary level (and backyard).
    Primary,
    /// Fingerprints in the small-regime secondary level.
    Secondary,
}

/// A numbered hash function.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Generation {
    pub id: u64,
    pub seed: u64,
}

impl Generation {
    pub fn derive(master_seed: u64, id: u64) -> Self {
        let seed = mix64(master_seed ^ mix64(id.wrapping_mul(GOLDEN).wrapping_add(0x5bd1_e995)));
        Generation { id, seed }
    }

    fn stream_seed(&self, stream: Stream) -> u64 {
        match stream {
            Stream::Primary => self.seed,
            Stream::Secondary => mix64(self.seed ^ 0xa076_1d64_78bd_642f),
        }
    }
}

/// Role of a generation within the current phase.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GenRole {
    /// `h_a`: keys above the frontier.
    A,
    /// `h_b`: keys at or below the frontier.
    B,
}

/// The hash of one key under one generation and stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashBits {
    pub element: u64,
    pub generation: Generation,
    pub stream: Stream,
    bits: BitString,
}

impl HashBits {
    pub fn compute<H: KeyHasher>(
        hasher: &H,
        params: &Params,
        generation: Generation,
        stream: Stream,
        element: u64,
    ) -> Self {
        let seed = generation.stream_seed(stream);
        let mut bits = BitString::new();
        let mut index = 0;
        while bits.len() < params.hash_bits {
            let take = (params.hash_bits - bits.len()).min(64);
            let block = hasher.block(seed, element, index);
            bits.push_value(block >> (64 - take), take);
            index += 1;
        }
        HashBits {
            element,
            generation,
            stream,
            bits,
        }
    }

    /// Wraps explicit bits; used by tests and fixtures.
    pub fn from_bits(element: u64, generation: Generation, stream: Stream, bits: BitString) -> Self {
        HashBits {
            element,
            generation,
            stream,
            bits,
        }
    }

    #[inline]
    pub fn bits(&self) -> &BitString {
        &self.bits
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.bits.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    #[inline]
    pub fn bit(&self, i: usize) -> bool {
        self.bits.get(i)
    }
}

/// Splits a hash into its baseline `(quotient, remainder)` for widths `q`, `r`.
#[inline]
pub fn split_baseline(bits: &BitString, q: u32, r: u32) -> (u64, u64) {
    (bits.value(0, q as usize), bits.value(q as usize, r as usize))
}

/// Frontier and generation bookkeeping for the deamortized rehash.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhaseState {
    master_seed: u64,
    /// `None` is the start-of-phase sentinel, below every key.
    pub frontier: Option<u64>,
    pub phase_index: u64,
    pub gen_a: Generation,
    pub gen_b: Generation,
}

impl PhaseState {
    pub fn new(master_seed: u64) -> Self {
        PhaseState {
            master_seed,
            frontier: None,
            phase_index: 0,
            gen_a: Generation::derive(master_seed, 0),
            gen_b: Generation::derive(master_seed, 1),
        }
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    /// Keys at or below the frontier use `h_b`; keys above use `h_a`.
    #[inline]
    pub fn role_of(&self, x: u64) -> GenRole {
        match self.frontier {
            Some(z) if x <= z => GenRole::B,
            _ => GenRole::A,
        }
    }

    #[inline]
    pub fn generation_of(&self, x: u64) -> Generation {
        match self.role_of(x) {
            GenRole::A => self.gen_a,
            GenRole::B => self.gen_b,
        }
    }

    /// Both generations that may own a live fingerprint.
    pub fn live_generations(&self) -> [Generation; 2] {
        [self.gen_a, self.gen_b]
    }

    /// Starts a new phase once the frontier has passed every tracked key.
    /// Returns whether a new phase began.
    pub fn advance_if_done(&mut self, max_key: Option<u64>) -> bool {
        let Some(z) = self.frontier else {
            return false;
        };
        if max_key.is_some_and(|m| z < m) {
            return false;
        }
        self.gen_a = self.gen_b;
        self.gen_b = Generation::derive(self.master_seed, self.gen_b.id + 1);
        self.frontier = None;
        self.phase_index += 1;
        true
    }
}
