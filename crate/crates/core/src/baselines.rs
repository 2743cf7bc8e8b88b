//! Filters to compare against: a Bloom filter, the broom layout without
//! adaptivity, and a Bloom filter with an exact whitelist of known false
//! positives.

use std::collections::{BTreeMap, BTreeSet};

use crate::amq::{Amq, FilterError};
use crate::hash::{mix64, Generation, HashBits, KeyHasher, MixHasher};
use crate::local::{Fingerprint, SpaceReport, FingerprintStore, Level, LevelHashes, PackedStore};
use crate::params::{epsilon_log2, Params, Regime};

#[derive(Debug, Clone)]
pub struct BloomBaseline {
    bits: Vec<u64>,
    m: u64,
    k: u32,
    n: u64,
    len: usize,
    seed: u64,
}

impl BloomBaseline {
    /// `m = ceil(log2(e) * n * log2(1/epsilon))` bits and `k = ceil(ln 2 * m / n)` probes.
    pub fn new(n: u64, epsilon: f64, seed: u64) -> Result<Self, FilterError> {
        let r = epsilon_log2(epsilon)?;
        Ok(Self::from_log2(n, r, seed))
    }

    pub fn from_log2(n: u64, r: u32, seed: u64) -> Self {
        let m = (std::f64::consts::LOG2_E * n as f64 * r as f64).ceil().max(64.0) as u64;
        let k = (std::f64::consts::LN_2 * m as f64 / n as f64).ceil().max(1.0) as u32;
        BloomBaseline {
            bits: vec![0; m.div_ceil(64) as usize],
            m,
            k,
            n,
            len: 0,
            seed: mix64(seed ^ 0x0b10_0f11),
        }
    }

    pub fn bit_len(&self) -> u64 {
        self.m
    }

    pub fn probes(&self) -> u32 {
        self.k
    }

    fn positions(&self, x: u64) -> impl Iterator<Item = u64> + '_ {
        // Double hashing from two independent 64-bit blocks.
        let a = MixHasher.block(self.seed, x, 0);
        let b = MixHasher.block(self.seed, x, 1) | 1;
        (0..self.k as u64).map(move |i| a.wrapping_add(i.wrapping_mul(b)) % self.m)
    }
}

impl Amq for BloomBaseline {
    fn name(&self) -> &'static str {
        "bloom"
    }

    fn capacity(&self) -> u64 {
        self.n
    }

    fn len(&self) -> usize {
        self.len
    }

    fn lookup(&self, x: u64) -> bool {
        self.positions(x).all(|p| self.bits[(p / 64) as usize] >> (p % 64) & 1 == 1)
    }

    fn insert(&mut self, x: u64) -> Result<(), FilterError> {
        if self.len as u64 >= self.n {
            return Err(FilterError::Capacity(self.n));
        }
        let pos: Vec<u64> = self.positions(x).collect();
        for p in pos {
            self.bits[(p / 64) as usize] |= 1 << (p % 64);
        }
        self.len += 1;
        Ok(())
    }

    fn delete(&mut self, _x: u64) -> Result<(), FilterError> {
        Err(FilterError::Unsupported("delete"))
    }

    fn adapt(&mut self, _x: u64) -> Result<(), FilterError> {
        Ok(())
    }

    fn supports_delete(&self) -> bool {
        false
    }

    fn space_bits(&self) -> u64 {
        self.m
    }
}

/// Baseline fingerprints in the broom filter's local layout, never adapted.
#[derive(Debug, Clone)]
pub struct QuotientBaseline<S = PackedStore> {
    params: Params,
    gen: Generation,
    store: S,
    levels: BTreeMap<u64, Level>,
}

impl QuotientBaseline {
    pub fn new(n: u64, epsilon: f64, seed: u64) -> Result<Self, FilterError> {
        Ok(Self::with_params(Params::new(n, epsilon)?, seed))
    }
}

impl<S: FingerprintStore> QuotientBaseline<S> {
    /// Hashes with the same first generation a broom filter with this seed uses.
    pub fn with_params(params: Params, seed: u64) -> Self {
        QuotientBaseline {
            store: S::new(&params),
            gen: Generation::derive(seed, 0),
            params,
            levels: BTreeMap::new(),
        }
    }

    pub fn store(&self) -> &S {
        &self.store
    }

    fn hashes(&self, x: u64) -> LevelHashes {
        let h = |level: Level| *HashBits::compute(&MixHasher, &self.params, self.gen, level.stream(), x).bits();
        LevelHashes {
            primary: h(Level::Primary),
            secondary: (self.params.regime == Regime::SmallRemainder).then(|| h(Level::Secondary)),
        }
    }

    fn fingerprint(&self, level: Level, h: &LevelHashes) -> Fingerprint {
        let len = match level {
            Level::Backyard => self.params.hash_bits,
            _ => self.params.baseline_bits(),
        };
        Fingerprint::new(level, h.for_level(level).prefix(len))
    }
}

impl<S: FingerprintStore> Amq for QuotientBaseline<S> {
    fn name(&self) -> &'static str {
        "quotient"
    }

    fn capacity(&self) -> u64 {
        self.params.n
    }

    fn len(&self) -> usize {
        self.levels.len()
    }

    fn lookup(&self, x: u64) -> bool {
        !self.store.query(&self.hashes(x)).full.is_empty()
    }

    fn insert(&mut self, x: u64) -> Result<(), FilterError> {
        if self.levels.contains_key(&x) {
            return Err(FilterError::Duplicate(x));
        }
        if self.levels.len() as u64 >= self.params.n {
            return Err(FilterError::Capacity(self.params.n));
        }
        let h = self.hashes(x);
        let level = self.store.choose_level(&h);
        self.store.insert(self.fingerprint(level, &h))?;
        self.levels.insert(x, level);
        Ok(())
    }

    fn delete(&mut self, x: u64) -> Result<(), FilterError> {
        let level = self.levels.remove(&x).ok_or(FilterError::Absent(x))?;
        let fp = self.fingerprint(level, &self.hashes(x));
        self.store.remove(&fp)?;
        Ok(())
    }

    fn adapt(&mut self, _x: u64) -> Result<(), FilterError> {
        Ok(())
    }

    fn space_bits(&self) -> u64 {
        self.store.measure().total_bits()
    }

    fn space_report(&self) -> Option<SpaceReport> {
        Some(self.store.measure())
    }
}

/// A Bloom filter at rate `1/n` plus every false positive seen so far.
#[derive(Debug, Clone)]
pub struct WhitelistBloom {
    bloom: BloomBaseline,
    whitelist: BTreeSet<u64>,
}

/// Bits charged per whitelisted key.
pub const WHITELIST_KEY_BITS: u64 = 64;

impl WhitelistBloom {
    pub fn new(n: u64, seed: u64) -> Result<Self, FilterError> {
        let n_ok = n.is_power_of_two() && n >= 2;
        if !n_ok {
            return Err(crate::params::ParamError::Capacity(n).into());
        }
        Ok(WhitelistBloom {
            bloom: BloomBaseline::from_log2(n, n.trailing_zeros(), seed),
            whitelist: BTreeSet::new(),
        })
    }

    pub fn whitelisted(&self) -> usize {
        self.whitelist.len()
    }
}

impl Amq for WhitelistBloom {
    fn name(&self) -> &'static str {
        "whitelist-bloom"
    }

    fn capacity(&self) -> u64 {
        self.bloom.capacity()
    }

    fn len(&self) -> usize {
        self.bloom.len()
    }

    fn lookup(&self, x: u64) -> bool {
        !self.whitelist.contains(&x) && self.bloom.lookup(x)
    }

    fn insert(&mut self, x: u64) -> Result<(), FilterError> {
        self.bloom.insert(x)?;
        self.whitelist.remove(&x);
        Ok(())
    }

    fn delete(&mut self, _x: u64) -> Result<(), FilterError> {
        Err(FilterError::Unsupported("delete"))
    }

    fn adapt(&mut self, x: u64) -> Result<(), FilterError> {
        self.whitelist.insert(x);
        Ok(())
    }

    fn supports_delete(&self) -> bool {
        false
    }

    fn space_bits(&self) -> u64 {
        self.bloom.space_bits() + WHITELIST_KEY_BITS * self.whitelist.len() as u64
    }
}
