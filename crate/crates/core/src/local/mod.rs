//! Local fingerprint storage.
//!
//! Two builds implement [`FingerprintStore`] with identical observable
//! behavior: [`ReferenceStore`] keeps explicit slots and plain lists and is
//! meant to be read, [`PackedStore`] keeps metadata bitvectors, packed
//! remainders and word-packed adaptivity groups and is meant to be used.
//!
//! Both lay out a level the same way. Quotient `a` has home slot
//! `floor(a * span / quotients)`, so the quotients are spread evenly over the
//! `span` slots, and runs are placed greedily left to right: an entry sits at
//! `max(home, previous entry's slot + 1)`, with new entries appended to the
//! end of their run. A primary-level entry may sit at most `probe_cap` slots
//! past its home; an insert that would push any entry further goes to the
//! overflow level instead. The primary array has `probe_cap` tail slots past
//! the span and never wraps.

mod backyard;
mod bitvec;
mod group;
mod packed;
mod reference;

use std::fmt;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::bits::BitString;
use crate::hash::Stream;
use crate::params::{Params, Regime};

pub use packed::PackedStore;
pub use reference::ReferenceStore;

pub(crate) use backyard::Backyard;
pub(crate) use group::{GROUP_QUOTIENTS, OFFSET_BITS};

/// Extra slots past the span of the secondary level.
pub const SECONDARY_TAIL: usize = 64;

/// Where a fingerprint is stored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Level {
    Primary,
    /// Small-remainder overflow quotient filter, under the secondary hash stream.
    Secondary,
    /// Large-remainder overflow table of full hashes.
    Backyard,
}

impl Level {
    /// The hash stream whose bits this level stores. The primary level and the
    /// backyard share one stream, so prefix-freeness is maintained across both.
    pub fn stream(self) -> Stream {
        match self {
            Level::Primary | Level::Backyard => Stream::Primary,
            Level::Secondary => Stream::Secondary,
        }
    }
}

/// A stored fingerprint: a prefix of its owner's hash in the level's stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Fingerprint {
    pub level: Level,
    pub bits: BitString,
}

impl Fingerprint {
    pub fn new(level: Level, bits: BitString) -> Self {
        Fingerprint { level, bits }
    }

    pub fn quotient(&self, params: &Params) -> u64 {
        self.bits.value(0, Geometry::quotient_bits(params, self.level) as usize)
    }

    pub fn remainder(&self, params: &Params) -> u64 {
        let q = Geometry::quotient_bits(params, self.level) as usize;
        self.bits.value(q, params.baseline_bits() - q)
    }

    /// Bits past the baseline.
    pub fn adaptivity(&self, params: &Params) -> BitString {
        self.bits.suffix(params.baseline_bits())
    }
}

/// An element's hash in each stream the store consults.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LevelHashes {
    pub primary: BitString,
    /// Present in the small-remainder regime only.
    pub secondary: Option<BitString>,
}

impl LevelHashes {
    pub fn for_level(&self, level: Level) -> &BitString {
        match level.stream() {
            Stream::Primary => &self.primary,
            Stream::Secondary => self
                .secondary
                .as_ref()
                .expect("secondary hash requested in the large-remainder regime"),
        }
    }
}

/// A deleted element's remembered quotient and adaptivity bits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GhostHandle {
    pub level: Level,
    pub quotient: u64,
    pub adaptivity: BitString,
}

/// Result of probing the store with an element's hashes.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct QueryMatch {
    /// Stored fingerprints that are prefixes of the hash, primary stream
    /// first. At most one per stream unless full hashes tie.
    pub full: Vec<Fingerprint>,
    /// Baseline matches that are not prefixes of the hash, in slot order.
    pub hard: Vec<Fingerprint>,
    /// Slots (or backyard entries) examined.
    pub probed: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpaceReport {
    /// Primary remainder slots (signature plus rest in the large regime).
    pub slot_bits: u64,
    /// Primary metadata, three bits per slot.
    pub metadata_bits: u64,
    /// Primary adaptivity group buffers.
    pub group_bits: u64,
    /// Strings held outside the group buffers.
    pub spill_bits: u64,
    /// Everything belonging to the secondary level.
    pub secondary_bits: u64,
    pub backyard_bits: u64,
    /// Adaptivity bits of live fingerprints and ghosts (content, not capacity).
    pub adaptivity_bits: u64,
    pub live: u64,
    pub ghosts: u64,
    pub spilled_groups: u64,
    /// Largest adaptivity-bit content of any group still in its own buffer.
    pub max_group_adaptivity_bits: u64,
}

impl SpaceReport {
    pub fn total_bits(&self) -> u64 {
        self.slot_bits
            + self.metadata_bits
            + self.group_bits
            + self.spill_bits
            + self.secondary_bits
            + self.backyard_bits
    }

    pub fn bits_per_element(&self) -> f64 {
        if self.live == 0 {
            0.0
        } else {
            self.total_bits() as f64 / self.live as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum StoreError {
    #[error("{0:?} level is full")]
    Full(Level),
    #[error("fingerprint {0:?} is not stored")]
    NotFound(Fingerprint),
    #[error("no ghost {0:?}")]
    StaleGhost(GhostHandle),
    #[error("fingerprint must be at least the baseline length and at most the hash length")]
    BadLength,
}

/// Why an entry could not be extended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum ExtendError {
    #[error("entry is not a prefix of the query hash")]
    NotACollision,
    /// The owner's and the query's hashes agree on every bit.
    #[error("hash bits exhausted: full-hash tie")]
    Exhausted,
}

/// The local representation of a set of fingerprints and ghosts.
///
/// Fingerprints are identified by content; two live entries only have the
/// same content when their owners' full hashes tie.
pub trait FingerprintStore: Clone + fmt::Debug + Send + Serialize + DeserializeOwned {
    fn new(params: &Params) -> Self;

    fn params(&self) -> &Params;

    /// The level a new element with these hashes would be placed in.
    fn choose_level(&self, hashes: &LevelHashes) -> Level;

    fn query(&self, hashes: &LevelHashes) -> QueryMatch;

    /// Stores a fingerprint at its level; returns the number of slots written.
    fn insert(&mut self, fp: Fingerprint) -> Result<usize, StoreError>;

    /// Replaces a stored fingerprint by a longer prefix of the same hash.
    fn replace(&mut self, old: &Fingerprint, bits: BitString) -> Result<usize, StoreError>;

    /// Removes a fingerprint and leaves a ghost of it behind.
    fn delete(&mut self, fp: &Fingerprint) -> Result<(GhostHandle, usize), StoreError>;

    /// Removes a fingerprint without leaving a ghost.
    fn remove(&mut self, fp: &Fingerprint) -> Result<usize, StoreError>;

    /// The longest ghost adaptivity string at `level` matching `hash`.
    fn ghost_match(&self, level: Level, hash: &BitString) -> Option<BitString>;

    fn purge_ghost(&mut self, ghost: &GhostHandle) -> Result<(), StoreError>;

    fn measure(&self) -> SpaceReport;

    /// All live fingerprints, sorted.
    fn fingerprints(&self) -> Vec<Fingerprint>;

    /// All ghosts, sorted.
    fn ghosts(&self) -> Vec<GhostHandle>;

    /// Extends `entry` with its owner's bits until it stops being a prefix of
    /// `query_hash`. Returns the number of bits appended.
    ///
    /// On a full-hash tie the entry is grown to the whole owner hash and
    /// [`ExtendError::Exhausted`] is returned.
    fn extend(
        &mut self,
        entry: &Fingerprint,
        owner_hash: &BitString,
        query_hash: &BitString,
    ) -> Result<usize, ExtendError> {
        let bits = extended_bits(self.params(), &entry.bits, owner_hash, query_hash);
        let new = match bits {
            Ok(b) | Err((ExtendError::Exhausted, b)) => b,
            Err((e, _)) => return Err(e),
        };
        let added = new.len() - entry.bits.len();
        if added > 0 {
            self.replace(entry, new)
                .expect("extend target is a stored fingerprint");
        }
        match bits {
            Ok(_) => Ok(added),
            Err((e, _)) => Err(e),
        }
    }
}

/// The fingerprint `current` grows into when extended against `query_hash`:
/// the owner's bits up to one past their common prefix with the query.
pub fn extended_bits(
    params: &Params,
    current: &BitString,
    owner_hash: &BitString,
    query_hash: &BitString,
) -> Result<BitString, (ExtendError, BitString)> {
    if !current.is_prefix_of(query_hash) || !current.is_prefix_of(owner_hash) {
        return Err((ExtendError::NotACollision, *current));
    }
    let base = params.baseline_bits();
    let lcp = owner_hash.lcp(query_hash).max(base);
    if lcp >= owner_hash.len() {
        return Err((ExtendError::Exhausted, *owner_hash));
    }
    Ok(owner_hash.prefix(lcp + 1))
}

/// Layout constants of one quotient-filter level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub(crate) struct Geometry {
    /// Number of distinct quotients.
    pub quotients: u64,
    /// Slots addressed by homes.
    pub span: usize,
    /// Total slots including the tail.
    pub slots: usize,
    pub q_bits: u32,
    pub r_bits: u32,
    /// Remainder bits kept in the metadata-carrying slot array.
    pub sig_bits: u32,
    /// Maximum displacement, if capped.
    pub cap: Option<usize>,
}

impl Geometry {
    pub fn primary(p: &Params) -> Self {
        Geometry {
            quotients: p.n,
            span: p.primary_slots,
            slots: p.primary_slots + p.probe_cap,
            q_bits: p.q,
            r_bits: p.r,
            sig_bits: p.signature_bits,
            cap: Some(p.probe_cap),
        }
    }

    pub fn secondary(p: &Params) -> Self {
        let quotients = 1u64 << p.secondary_q;
        Geometry {
            quotients,
            span: quotients as usize,
            slots: quotients as usize + SECONDARY_TAIL,
            q_bits: p.secondary_q,
            r_bits: p.secondary_r,
            sig_bits: p.secondary_r,
            cap: None,
        }
    }

    pub fn quotient_bits(p: &Params, level: Level) -> u32 {
        match level {
            Level::Secondary => p.secondary_q,
            Level::Primary | Level::Backyard => p.q,
        }
    }

    #[inline]
    pub fn home(&self, quotient: u64) -> usize {
        (quotient as u128 * self.span as u128 / self.quotients as u128) as usize
    }

    /// Inverse of [`Geometry::home`] on home slots.
    #[inline]
    pub fn quotient_at(&self, home: usize) -> u64 {
        let q = (home as u128 * self.quotients as u128).div_ceil(self.span as u128) as u64;
        debug_assert_eq!(self.home(q), home);
        q
    }

    pub fn groups(&self) -> usize {
        self.quotients.div_ceil(GROUP_QUOTIENTS) as usize
    }

    pub fn slot_bits(&self) -> u64 {
        self.slots as u64 * self.r_bits as u64
    }

    pub fn metadata_bits(&self) -> u64 {
        self.slots as u64 * 3
    }

    /// The signature part of a remainder.
    #[inline]
    pub fn signature(&self, remainder: u64) -> u64 {
        remainder >> (self.r_bits - self.sig_bits)
    }
}

/// Geometry of every quotient-filter level for these parameters.
pub(crate) fn levels(p: &Params) -> (Geometry, Option<Geometry>) {
    let secondary = (p.regime == Regime::SmallRemainder).then(|| Geometry::secondary(p));
    (Geometry::primary(p), secondary)
}

/// Checks that no live fingerprint is a prefix of another in the same hash
/// stream. Identical fingerprints of full hash length are a tie, not a
/// violation; their count is returned on success.
pub fn check_prefix_free(params: &Params, fps: &[Fingerprint]) -> Result<usize, (Fingerprint, Fingerprint)> {
    let mut ties = 0;
    for stream in [Stream::Primary, Stream::Secondary] {
        let mut v: Vec<&Fingerprint> = fps.iter().filter(|f| f.level.stream() == stream).collect();
        v.sort_by(|a, b| a.bits.cmp(&b.bits));
        // In lexicographic order any prefix relation shows up between neighbors.
        for w in v.windows(2) {
            if w[0].bits.is_prefix_of(&w[1].bits) {
                if w[0].bits == w[1].bits && w[0].bits.len() == params.hash_bits {
                    ties += 1;
                } else {
                    return Err((*w[0], *w[1]));
                }
            }
        }
    }
    Ok(ties)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bits::bs;

    #[test]
    fn homes_spread_and_invert() {
        let p = Params::from_log2(1 << 10, 4).unwrap();
        let g = Geometry::primary(&p);
        let mut last = None;
        for a in 0..p.n {
            let h = g.home(a);
            assert!(h < g.span);
            assert!(last.is_none_or(|l| h > l));
            assert_eq!(g.quotient_at(h), a);
            last = Some(h);
        }
    }

    #[test]
    fn extension_rule_examples() {
        let p = Params::from_log2(16, 2).unwrap();
        let base = "000000";
        let fp = bs(base);
        let pad = |s: &str| {
            let mut b = bs(base);
            b.append(&bs(s));
            b.append(&BitString::from_value(0, p.hash_bits - b.len()));
            b
        };
        let owner = pad("1101");
        let new = extended_bits(&p, &fp, &owner, &pad("0")).unwrap();
        assert_eq!(new.suffix(6), bs("1"));
        let new = extended_bits(&p, &fp, &owner, &pad("1110")).unwrap();
        assert_eq!(new.suffix(6), bs("110"));
        assert!(matches!(
            extended_bits(&p, &fp, &owner, &owner),
            Err((ExtendError::Exhausted, _))
        ));
        assert!(matches!(
            extended_bits(&p, &bs("1"), &owner, &owner),
            Err((ExtendError::NotACollision, _))
        ));
    }

    #[test]
    fn prefix_check_finds_violations_and_ties() {
        let p = Params::from_log2(16, 2).unwrap();
        let f = |s: &str| Fingerprint::new(Level::Primary, bs(s));
        let ok = [f("000000"), f("0000010"), f("0000011")];
        assert_eq!(check_prefix_free(&p, &ok), Ok(0));
        let bad = [f("000000"), f("0000001"), f("111111")];
        assert!(check_prefix_free(&p, &bad).is_err());
        let full = BitString::from_value(5, p.hash_bits);
        let tie = [Fingerprint::new(Level::Primary, full), Fingerprint::new(Level::Backyard, full)];
        assert_eq!(check_prefix_free(&p, &tie), Ok(1));
        // Different streams never conflict.
        let cross = [f("000000"), Fingerprint::new(Level::Secondary, bs("0000001"))];
        assert_eq!(check_prefix_free(&p, &cross), Ok(0));
    }
}
