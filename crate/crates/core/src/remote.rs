//! The remote representation: the key set itself, remembered ghost keys, and
//! a reverse index from baseline fingerprints to keys.
//!
//! Every method that stands for a round trip to remote storage takes the
//! [`Tally`] it should be charged to.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::local::{GhostHandle, Level};

/// Which kind of operation an access is attributed to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OpClass {
    QueryNegative,
    QueryFalsePositive,
    QueryTruePositive,
    Insert,
    Delete,
    /// Frontier sweeps triggered by Extend.
    AdaptReclaim,
}

impl OpClass {
    pub const ALL: [OpClass; 6] = [
        OpClass::QueryNegative,
        OpClass::QueryFalsePositive,
        OpClass::QueryTruePositive,
        OpClass::Insert,
        OpClass::Delete,
        OpClass::AdaptReclaim,
    ];

    pub fn name(self) -> &'static str {
        match self {
            OpClass::QueryNegative => "query_negative",
            OpClass::QueryFalsePositive => "query_false_positive",
            OpClass::QueryTruePositive => "query_true_positive",
            OpClass::Insert => "insert",
            OpClass::Delete => "delete",
            OpClass::AdaptReclaim => "adapt_reclaim",
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tally {
    pub remote_lookups: u64,
    pub remote_updates: u64,
    /// Updates to the key set that a dictionary performs anyway.
    pub dictionary_ops: u64,
    /// Slots read in the local store.
    #[serde(rename = "local_reads")]
    pub local_word_reads: u64,
    /// Slots written in the local store.
    #[serde(rename = "local_writes")]
    pub local_word_writes: u64,
}

impl Tally {
    /// Remote accesses attributable to the filter (dictionary operations excluded).
    pub fn remote_accesses(&self) -> u64 {
        self.remote_lookups + self.remote_updates
    }

    pub fn minus(&self, earlier: &Tally) -> Tally {
        Tally {
            remote_lookups: self.remote_lookups - earlier.remote_lookups,
            remote_updates: self.remote_updates - earlier.remote_updates,
            dictionary_ops: self.dictionary_ops - earlier.dictionary_ops,
            local_word_reads: self.local_word_reads - earlier.local_word_reads,
            local_word_writes: self.local_word_writes - earlier.local_word_writes,
        }
    }

    fn plus(&self, other: &Tally) -> Tally {
        Tally {
            remote_lookups: self.remote_lookups + other.remote_lookups,
            remote_updates: self.remote_updates + other.remote_updates,
            dictionary_ops: self.dictionary_ops + other.dictionary_ops,
            local_word_reads: self.local_word_reads + other.local_word_reads,
            local_word_writes: self.local_word_writes + other.local_word_writes,
        }
    }
}

/// Monotone access counters, one [`Tally`] per [`OpClass`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccessCounters {
    pub query_negative: Tally,
    pub query_false_positive: Tally,
    pub query_true_positive: Tally,
    pub insert: Tally,
    pub delete: Tally,
    pub adapt_reclaim: Tally,
}

impl AccessCounters {
    pub fn get(&self, class: OpClass) -> &Tally {
        match class {
            OpClass::QueryNegative => &self.query_negative,
            OpClass::QueryFalsePositive => &self.query_false_positive,
            OpClass::QueryTruePositive => &self.query_true_positive,
            OpClass::Insert => &self.insert,
            OpClass::Delete => &self.delete,
            OpClass::AdaptReclaim => &self.adapt_reclaim,
        }
    }

    pub fn get_mut(&mut self, class: OpClass) -> &mut Tally {
        match class {
            OpClass::QueryNegative => &mut self.query_negative,
            OpClass::QueryFalsePositive => &mut self.query_false_positive,
            OpClass::QueryTruePositive => &mut self.query_true_positive,
            OpClass::Insert => &mut self.insert,
            OpClass::Delete => &mut self.delete,
            OpClass::AdaptReclaim => &mut self.adapt_reclaim,
        }
    }

    pub fn total(&self) -> Tally {
        OpClass::ALL
            .iter()
            .fold(Tally::default(), |acc, &c| acc.plus(self.get(c)))
    }

    pub fn minus(&self, earlier: &AccessCounters) -> AccessCounters {
        let mut out = AccessCounters::default();
        for c in OpClass::ALL {
            *out.get_mut(c) = self.get(c).minus(earlier.get(c));
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("counters serialize")
    }
}

/// Index key: a key's baseline fingerprint under the generation that hashed it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RevKey {
    pub generation: u64,
    pub level: Level,
    pub quotient: u64,
    pub remainder: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KeyKind {
    Live,
    Ghost,
}

/// Outcome of a reverse lookup.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RevMatch {
    None,
    One { key: u64, generation: u64 },
    /// Several keys own identical full-length fingerprints; the smallest is reported.
    Tie { key: u64, generation: u64, count: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RemoteError {
    #[error("key {0} is already live")]
    AlreadyLive(u64),
    #[error("key {0} is not live")]
    NotLive(u64),
    #[error("key {0} is not registered under the given triple")]
    StaleTriple(u64),
}

/// Ghosts are kept per key and level. A deleted key has at least one; a
/// live key keeps the ghosts it left at levels other than its current one,
/// so its history there survives a move between levels.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RemoteState {
    live: BTreeSet<u64>,
    /// Key to its ghosts, each tagged with a creation sequence number.
    ghosts: BTreeMap<u64, BTreeMap<u64, GhostHandle>>,
    ghost_count: usize,
    next_seq: u64,
    triples: BTreeMap<u64, RevKey>,
    #[serde(skip)]
    ghost_order: BTreeMap<u64, u64>,
    #[serde(skip)]
    rev_index: BTreeMap<RevKey, BTreeSet<u64>>,
}

impl RemoteState {
    pub fn new() -> Self {
        Self::default()
    }

    /// Rebuilds the derived indexes after deserialization.
    pub(crate) fn rebuild_indexes(&mut self) {
        self.ghost_order = self
            .ghosts
            .iter()
            .flat_map(|(&k, g)| g.keys().map(move |&seq| (seq, k)))
            .collect();
        self.rev_index.clear();
        for (&k, &t) in &self.triples {
            self.rev_index.entry(t).or_default().insert(k);
        }
    }

    pub fn is_live(&self, key: u64) -> bool {
        self.live.contains(&key)
    }

    /// Deleted and still remembered.
    pub fn is_ghost(&self, key: u64) -> bool {
        !self.live.contains(&key) && self.ghosts.contains_key(&key)
    }

    pub fn live_len(&self) -> usize {
        self.live.len()
    }

    /// Number of ghosts (a key may hold several).
    pub fn ghost_len(&self) -> usize {
        self.ghost_count
    }

    pub fn live_keys(&self) -> impl Iterator<Item = u64> + '_ {
        self.live.iter().copied()
    }

    /// Deleted keys that still have ghosts.
    pub fn ghost_keys(&self) -> impl Iterator<Item = u64> + '_ {
        self.ghosts.keys().copied().filter(|k| !self.live.contains(k))
    }

    pub fn ghosts_of(&self, key: u64) -> Vec<GhostHandle> {
        self.ghosts.get(&key).map_or_else(Vec::new, |g| g.values().copied().collect())
    }

    pub fn triple(&self, key: u64) -> Option<RevKey> {
        self.triples.get(&key).copied()
    }

    /// Largest key, live or ghost.
    pub fn max_key(&self) -> Option<u64> {
        let a = self.live.last().copied();
        let b = self.ghosts.last_key_value().map(|(&k, _)| k);
        a.max(b)
    }

    pub fn insert(&mut self, key: u64, triple: RevKey, t: &mut Tally) -> Result<(), RemoteError> {
        if !self.live.insert(key) {
            return Err(RemoteError::AlreadyLive(key));
        }
        self.triples.insert(key, triple);
        self.rev_index.entry(triple).or_default().insert(key);
        t.dictionary_ops += 1;
        Ok(())
    }

    /// Removes a live key and its index entry, returning the triple it had.
    pub fn delete(&mut self, key: u64, t: &mut Tally) -> Result<RevKey, RemoteError> {
        if !self.live.remove(&key) {
            return Err(RemoteError::NotLive(key));
        }
        let triple = self.triples.remove(&key).expect("live keys are indexed");
        self.unindex(key, triple);
        t.dictionary_ops += 1;
        Ok(triple)
    }

    fn unindex(&mut self, key: u64, triple: RevKey) {
        let bucket = self.rev_index.get_mut(&triple).expect("indexed");
        bucket.remove(&key);
        if bucket.is_empty() {
            self.rev_index.remove(&triple);
        }
    }

    /// Remembers the ghost a deleted key left behind.
    pub fn add_ghost(&mut self, key: u64, handle: GhostHandle, t: &mut Tally) {
        let seq = self.next_seq;
        self.next_seq += 1;
        self.ghosts.entry(key).or_default().insert(seq, handle);
        self.ghost_order.insert(seq, key);
        self.ghost_count += 1;
        t.remote_updates += 1;
    }

    fn remove_where(&mut self, key: u64, keep: impl Fn(&GhostHandle) -> bool) -> Vec<GhostHandle> {
        let Some(entries) = self.ghosts.get_mut(&key) else {
            return Vec::new();
        };
        let gone: Vec<u64> = entries.iter().filter(|(_, h)| !keep(h)).map(|(&s, _)| s).collect();
        let out: Vec<GhostHandle> = gone.iter().map(|s| entries.remove(s).unwrap()).collect();
        if entries.is_empty() {
            self.ghosts.remove(&key);
        }
        for s in gone {
            self.ghost_order.remove(&s);
        }
        self.ghost_count -= out.len();
        out
    }

    /// Forgets every ghost of a key, returning their handles.
    pub fn purge_ghosts(&mut self, key: u64, t: &mut Tally) -> Vec<GhostHandle> {
        let out = self.remove_where(key, |_| false);
        if !out.is_empty() {
            t.remote_updates += 1;
        }
        out
    }

    /// Drops a reinserted key's ghosts at the level it returns to, as part of
    /// the dictionary insert.
    pub fn take_ghosts_at(&mut self, key: u64, level: Level, t: &mut Tally) -> Vec<GhostHandle> {
        let out = self.remove_where(key, |h| h.level != level);
        if !out.is_empty() {
            t.dictionary_ops += 1;
        }
        out
    }

    /// Forgets the oldest ghost if there are more than `cap`.
    pub fn evict_ghost_over(&mut self, cap: usize, t: &mut Tally) -> Option<(u64, GhostHandle)> {
        if self.ghost_count <= cap {
            return None;
        }
        let (seq, key) = self.ghost_order.pop_first()?;
        let entries = self.ghosts.get_mut(&key).expect("ordered ghost exists");
        let handle = entries.remove(&seq).expect("ordered ghost exists");
        if entries.is_empty() {
            self.ghosts.remove(&key);
        }
        self.ghost_count -= 1;
        t.remote_updates += 1;
        Some((key, handle))
    }

    /// The `m` smallest keys, live or ghost, strictly above `z` (`None` is below every key).
    pub fn next_keys_above(&self, z: Option<u64>, m: usize, t: &mut Tally) -> Vec<(u64, KeyKind)> {
        t.remote_lookups += 1;
        let lo = match z {
            None => std::ops::Bound::Unbounded,
            Some(z) => std::ops::Bound::Excluded(z),
        };
        let range = (lo, std::ops::Bound::Unbounded);
        let mut live = self.live.range(range).copied().peekable();
        let mut ghosts = self.ghosts.range(range).map(|(&k, _)| k).peekable();
        let mut out = Vec::with_capacity(m);
        while out.len() < m {
            let next = match (live.peek().copied(), ghosts.peek().copied()) {
                (Some(a), Some(b)) if a == b => {
                    ghosts.next();
                    (live.next().unwrap(), KeyKind::Live)
                }
                (Some(a), Some(b)) if a < b => (live.next().unwrap(), KeyKind::Live),
                (_, Some(_)) => (ghosts.next().unwrap(), KeyKind::Ghost),
                (Some(_), None) => (live.next().unwrap(), KeyKind::Live),
                (None, None) => break,
            };
            out.push(next);
        }
        out
    }

    /// Moves a live key's index entry to a new triple.
    pub fn rekey(&mut self, key: u64, old: RevKey, new: RevKey, t: &mut Tally) -> Result<(), RemoteError> {
        if self.triples.get(&key) != Some(&old) {
            return Err(RemoteError::StaleTriple(key));
        }
        self.unindex(key, old);
        self.triples.insert(key, new);
        self.rev_index.entry(new).or_default().insert(key);
        t.remote_updates += 1;
        Ok(())
    }

    /// One round trip: fetches the keys registered under `(g, level, quotient,
    /// remainder)` for each live generation `g` and keeps those for which
    /// `owns(key, generation)` confirms the stored fingerprint.
    pub fn rev_lookup(
        &self,
        generations: [u64; 2],
        level: Level,
        quotient: u64,
        remainder: u64,
        t: &mut Tally,
        mut owns: impl FnMut(u64, u64) -> bool,
    ) -> RevMatch {
        t.remote_lookups += 1;
        let mut hits = Vec::new();
        let mut gens = generations.to_vec();
        gens.dedup();
        for generation in gens {
            let key = RevKey {
                generation,
                level,
                quotient,
                remainder,
            };
            if let Some(bucket) = self.rev_index.get(&key) {
                hits.extend(bucket.iter().filter(|&&k| owns(k, generation)).map(|&k| (k, generation)));
            }
        }
        hits.sort();
        match hits.as_slice() {
            [] => RevMatch::None,
            [(key, generation)] => RevMatch::One {
                key: *key,
                generation: *generation,
            },
            [(key, generation), ..] => RevMatch::Tie {
                key: *key,
                generation: *generation,
                count: hits.len(),
            },
        }
    }

    /// True when the maintained index equals one rebuilt from the live keys' triples.
    pub fn index_consistent(&self, triple_of: impl Fn(u64) -> Option<RevKey>) -> bool {
        let mut rebuilt: BTreeMap<RevKey, BTreeSet<u64>> = BTreeMap::new();
        for &k in &self.live {
            match triple_of(k) {
                Some(t) => {
                    rebuilt.entry(t).or_default().insert(k);
                }
                None => return false,
            }
        }
        rebuilt == self.rev_index
            && self.triples.len() == self.live.len()
            && self.ghost_count == self.ghosts.values().map(|g| g.len()).sum::<usize>()
    }
}
