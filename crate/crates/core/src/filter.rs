//! The broom filter: a local fingerprint store kept consistent with a remote
//! key set, fixing each false positive as it is reported.
//!
//! Fingerprints are variable-length prefixes of their owner's hash and are
//! kept prefix-free within each hash stream, so a query fully collides with
//! at most one of them. A false positive `x` is fixed by looking up the owner
//! `y` remotely and growing `p(y)` until it is no longer a prefix of `h(x)`.
//!
//! Grown fingerprints would accumulate forever, so every fix also rehashes a
//! few keys: a frontier sweeps the key order, keys at or below it use the
//! newer of two hash generations, and once it passes the largest key the
//! generations shift and the sweep restarts.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::amq::{Amq, FilterError};
use crate::bits::BitString;
use crate::hash::{Generation, HashBits, KeyHasher, MixHasher, PhaseState};
use crate::local::{
    check_prefix_free, ExtendError, Fingerprint, FingerprintStore, Level, LevelHashes, PackedStore,
    SpaceReport,
};
use crate::params::{Params, Regime};
use crate::remote::{AccessCounters, KeyKind, OpClass, RemoteState, RevKey, RevMatch};

/// One false-positive fix: `owner`'s fingerprint was grown away from `query`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixRecord {
    pub query: u64,
    pub owner: u64,
    pub query_generation: u64,
    pub owner_generation: u64,
    pub level: Level,
    /// Bumped whenever the owner's ghost was evicted by the ghost cap.
    pub owner_epoch: u64,
    /// The two hashes tied on every bit, so the collision cannot be fixed.
    pub tie: bool,
}

impl FixRecord {
    fn identity(&self) -> (u64, u64, u64, u64, Level, u64) {
        (
            self.query,
            self.owner,
            self.query_generation,
            self.owner_generation,
            self.level,
            self.owner_epoch,
        )
    }
}

/// Every fix applied, checked for pairs that collide again under unchanged
/// hash generations.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixLog {
    seen: BTreeSet<(u64, u64, u64, u64, Level, u64)>,
    epochs: BTreeMap<u64, u64>,
    repeats: Vec<FixRecord>,
    last: Option<FixRecord>,
    total: u64,
    ties: u64,
}

impl FixLog {
    fn record(&mut self, rec: FixRecord) {
        self.total += 1;
        self.last = Some(rec);
        if rec.tie {
            self.ties += 1;
        } else if !self.seen.insert(rec.identity()) {
            self.repeats.push(rec);
        }
    }

    fn epoch(&self, key: u64) -> u64 {
        self.epochs.get(&key).copied().unwrap_or(0)
    }

    fn bump(&mut self, key: u64) {
        *self.epochs.entry(key).or_default() += 1;
    }

    /// Fixes whose pair had already been fixed under the same generations.
    pub fn repeats(&self) -> &[FixRecord] {
        &self.repeats
    }

    pub fn last(&self) -> Option<&FixRecord> {
        self.last.as_ref()
    }

    /// Members that `query` has been fixed against, ties excluded.
    pub fn owners_of(&self, query: u64) -> impl Iterator<Item = u64> + '_ {
        self.seen.range((query, 0, 0, 0, Level::Primary, 0)..).take_while(move |t| t.0 == query).map(|t| t.1)
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn ties(&self) -> u64 {
        self.ties
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct InvariantReport {
    pub live: usize,
    pub ghosts: usize,
    /// Pairs of identical full-length fingerprints.
    pub ties: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum InvariantViolation {
    #[error("{0:?} is a prefix of {1:?}")]
    NotPrefixFree(Fingerprint, Fingerprint),
    #[error("live key {0} looks up absent")]
    FalseNegative(u64),
    #[error("key {0} is registered under generation {1}, expected {2}")]
    Generation(u64, u64, u64),
    #[error("reverse index does not match the live keys")]
    Index,
    #[error("local and remote disagree on {what}: {local} vs {remote}")]
    Count {
        what: &'static str,
        local: u64,
        remote: u64,
    },
}

const SNAPSHOT_MAGIC: &[u8; 8] = b"BROOMSNP";
const SNAPSHOT_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum SnapshotError {
    #[error("not a filter snapshot")]
    Magic,
    #[error("snapshot version {found} is not supported (expected {SNAPSHOT_VERSION})")]
    Version { found: u32 },
    #[error("snapshot body: {0}")]
    Body(#[from] serde_json::Error),
}

#[derive(Serialize, Deserialize)]
struct SnapshotBody<S> {
    params: Params,
    phase: PhaseState,
    adaptive: bool,
    local: S,
    remote: RemoteState,
    counters: AccessCounters,
    fixes: FixLog,
}

/// How a placement treats ghosts and further reclamation.
#[derive(Clone, Copy, PartialEq, Eq)]
enum Placement {
    /// A fresh insert: inherit ghost bits, and each fix triggers a reclaim step.
    Insert,
    /// A key being rehashed by the sweep.
    Rehash,
}

fn level_hash<H: KeyHasher>(hasher: &H, params: &Params, gen: Generation, level: Level, x: u64) -> BitString {
    *HashBits::compute(hasher, params, gen, level.stream(), x).bits()
}

fn hashes_under<H: KeyHasher>(hasher: &H, params: &Params, gen: Generation, x: u64) -> LevelHashes {
    LevelHashes {
        primary: level_hash(hasher, params, gen, Level::Primary, x),
        secondary: (params.regime == Regime::SmallRemainder)
            .then(|| level_hash(hasher, params, gen, Level::Secondary, x)),
    }
}

#[derive(Debug, Clone)]
pub struct BroomFilter<S = PackedStore, H = MixHasher> {
    params: Params,
    phase: PhaseState,
    adaptive: bool,
    local: S,
    remote: RemoteState,
    counters: AccessCounters,
    fixes: FixLog,
    hasher: H,
}

impl BroomFilter {
    pub fn new(n: u64, epsilon: f64, seed: u64) -> Result<Self, FilterError> {
        Ok(Self::with_params(Params::new(n, epsilon)?, seed, MixHasher))
    }
}

impl<S: FingerprintStore, H: KeyHasher> BroomFilter<S, H> {
    pub fn with_params(params: Params, seed: u64, hasher: H) -> Self {
        BroomFilter {
            local: S::new(&params),
            params,
            phase: PhaseState::new(seed),
            adaptive: true,
            remote: RemoteState::new(),
            counters: AccessCounters::default(),
            fixes: FixLog::default(),
            hasher,
        }
    }

    /// The same layout with fixes, ghosts and rehashing switched off.
    pub fn oblivious(params: Params, seed: u64, hasher: H) -> Self {
        let mut f = Self::with_params(params, seed, hasher);
        f.adaptive = false;
        f
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    pub fn phase(&self) -> &PhaseState {
        &self.phase
    }

    pub fn is_adaptive(&self) -> bool {
        self.adaptive
    }

    pub fn local(&self) -> &S {
        &self.local
    }

    pub fn remote(&self) -> &RemoteState {
        &self.remote
    }

    pub fn counters(&self) -> &AccessCounters {
        &self.counters
    }

    pub fn fixes(&self) -> &FixLog {
        &self.fixes
    }

    pub fn len(&self) -> usize {
        self.remote.live_len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, x: u64) -> bool {
        self.remote.is_live(x)
    }

    pub fn space(&self) -> SpaceReport {
        self.local.measure()
    }

    /// `x`'s hashes under the generation currently assigned to it.
    pub fn hashes(&self, x: u64) -> LevelHashes {
        hashes_under(&self.hasher, &self.params, self.phase.generation_of(x), x)
    }

    fn generation(&self, id: u64) -> Result<Generation, FilterError> {
        [self.phase.gen_a, self.phase.gen_b]
            .into_iter()
            .find(|g| g.id == id)
            .ok_or_else(|| FilterError::Corrupt(format!("generation {id} is no longer live")))
    }

    /// Local lookup; also returns the slots probed.
    pub fn probe(&self, x: u64) -> (bool, usize) {
        let m = self.local.query(&self.hashes(x));
        (!m.full.is_empty(), m.probed)
    }

    pub fn lookup(&self, x: u64) -> bool {
        self.probe(x).0
    }

    /// Lookup through the oracle: classifies the answer against the key set,
    /// charges the probe to that class, and adapts on a false positive.
    pub fn checked_lookup(&mut self, x: u64) -> Result<bool, FilterError> {
        let member = self.remote.is_live(x);
        self.lookup_as(x, member)
    }

    fn lookup_as(&mut self, x: u64, member: bool) -> Result<bool, FilterError> {
        let (present, probed) = self.probe(x);
        let class = match (member, present) {
            (true, _) => OpClass::QueryTruePositive,
            (false, true) => OpClass::QueryFalsePositive,
            (false, false) => OpClass::QueryNegative,
        };
        self.counters.get_mut(class).local_word_reads += probed as u64;
        if class == OpClass::QueryFalsePositive {
            self.adapt(x)?;
        }
        Ok(present)
    }

    /// Fixes false positive `x` so that it looks up absent, unless it ties an
    /// element's hash on every bit.
    pub fn adapt(&mut self, x: u64) -> Result<(), FilterError> {
        if self.remote.is_live(x) {
            return Err(FilterError::NotFalsePositive(x));
        }
        let mut first = true;
        loop {
            let gen = self.phase.generation_of(x);
            let h = hashes_under(&self.hasher, &self.params, gen, x);
            let m = self.local.query(&h);
            if first && m.full.is_empty() {
                return Err(FilterError::NotFalsePositive(x));
            }
            if !first {
                self.counters.query_false_positive.local_word_reads += m.probed as u64;
            }
            first = false;
            let Some(entry) = m.full.iter().find(|f| f.bits.len() < self.params.hash_bits) else {
                return Ok(());
            };
            if !self.adaptive {
                return Ok(());
            }
            if !self.fix(x, &h, gen, *entry, OpClass::QueryFalsePositive)? {
                self.reclaim_step()?;
            }
        }
    }

    pub fn insert(&mut self, x: u64) -> Result<(), FilterError> {
        if self.remote.is_live(x) {
            return Err(FilterError::Duplicate(x));
        }
        if self.remote.live_len() as u64 >= self.params.n {
            return Err(FilterError::Capacity(self.params.n));
        }
        let (fp, triple) = self.place(x, OpClass::Insert, Placement::Insert)?;
        let t = &mut self.counters.insert;
        t.local_word_writes += self.local.insert(fp)? as u64;
        for ghost in self.remote.take_ghosts_at(x, fp.level, t) {
            self.local.purge_ghost(&ghost)?;
            t.local_word_writes += 1;
        }
        self.remote.insert(x, triple, t)?;
        Ok(())
    }

    pub fn delete(&mut self, x: u64) -> Result<(), FilterError> {
        if !self.remote.is_live(x) {
            return Err(FilterError::Absent(x));
        }
        let triple = self.remote.delete(x, &mut self.counters.delete)?;
        let entry = self.own_entry(x, triple, OpClass::Delete)?;
        let t = &mut self.counters.delete;
        if !self.adaptive {
            t.local_word_writes += self.local.remove(&entry)? as u64;
            return Ok(());
        }
        let (ghost, written) = self.local.delete(&entry)?;
        t.local_word_writes += written as u64;
        self.remote.add_ghost(x, ghost, t);
        while let Some((key, old)) = self.remote.evict_ghost_over(self.params.n as usize, t) {
            self.local.purge_ghost(&old)?;
            t.local_word_writes += 1;
            self.fixes.bump(key);
        }
        Ok(())
    }

    /// Finds the stored fingerprint of live key `x` registered under `triple`.
    fn own_entry(&mut self, x: u64, triple: RevKey, class: OpClass) -> Result<Fingerprint, FilterError> {
        let gen = self.generation(triple.generation)?;
        let h = hashes_under(&self.hasher, &self.params, gen, x);
        let m = self.local.query(&h);
        self.counters.get_mut(class).local_word_reads += m.probed as u64;
        m.full
            .into_iter()
            .find(|f| f.level == triple.level)
            .ok_or_else(|| FilterError::Corrupt(format!("no fingerprint for live key {x}")))
    }

    /// Chooses a level and fingerprint for `x` under its current generation,
    /// first extending any live fingerprint that `h(x)` fully collides with.
    fn place(&mut self, x: u64, class: OpClass, how: Placement) -> Result<(Fingerprint, RevKey), FilterError> {
        loop {
            let gen = self.phase.generation_of(x);
            let h = hashes_under(&self.hasher, &self.params, gen, x);
            let level = self.local.choose_level(&h);
            let stream = level.stream();
            let m = self.local.query(&h);
            self.counters.get_mut(class).local_word_reads += m.probed as u64;
            if self.adaptive {
                // Full-length entries can only be ties and are left alone.
                let hit = m
                    .full
                    .iter()
                    .find(|f| f.level.stream() == stream && f.bits.len() < self.params.hash_bits);
                if let Some(&entry) = hit {
                    let tie = self.fix(x, &h, gen, entry, class)?;
                    // A tie survives any rehash, so sweeping on it could loop forever.
                    if how == Placement::Insert && !tie {
                        self.reclaim_step()?;
                    }
                    continue;
                }
            }

            let hash = *h.for_level(level);
            let base = self.params.baseline_bits();
            let len = if level == Level::Backyard {
                self.params.hash_bits
            } else if !self.adaptive {
                base
            } else {
                let ghost = match how {
                    Placement::Insert => self.local.ghost_match(level, &hash).map_or(0, |g| g.len()),
                    Placement::Rehash => 0,
                };
                let diverge = m
                    .hard
                    .iter()
                    .chain(&m.full)
                    .filter(|f| f.level.stream() == stream)
                    .map(|f| f.bits.lcp(&hash) + 1)
                    .max()
                    .unwrap_or(0);
                (base + ghost).max(diverge).min(self.params.hash_bits)
            };
            let fp = Fingerprint::new(level, hash.prefix(len));
            let triple = RevKey {
                generation: gen.id,
                level,
                quotient: fp.quotient(&self.params),
                remainder: fp.remainder(&self.params),
            };
            return Ok((fp, triple));
        }
    }

    /// Extend: grows the owner of `entry` away from `x`'s hash. Returns
    /// whether the two hashes tie.
    fn fix(
        &mut self,
        x: u64,
        hx: &LevelHashes,
        gen_x: Generation,
        entry: Fingerprint,
        class: OpClass,
    ) -> Result<bool, FilterError> {
        let (hasher, params, phase) = (&self.hasher, &self.params, &self.phase);
        let gens = [phase.gen_a, phase.gen_b];
        let found = self.remote.rev_lookup(
            [gens[0].id, gens[1].id],
            entry.level,
            entry.quotient(params),
            entry.remainder(params),
            self.counters.get_mut(class),
            |k, g| {
                let gen = if g == gens[0].id { gens[0] } else { gens[1] };
                entry.bits.is_prefix_of(&level_hash(hasher, params, gen, entry.level, k))
            },
        );
        let (owner, owner_gen, several) = match found {
            RevMatch::None => {
                return Err(FilterError::Corrupt(format!("no owner for {:?}", entry)));
            }
            RevMatch::One { key, generation } => (key, generation, false),
            RevMatch::Tie { key, generation, .. } => (key, generation, true),
        };
        let owner_hash = level_hash(hasher, params, self.generation(owner_gen)?, entry.level, owner);
        let outcome = self.local.extend(&entry, &owner_hash, hx.for_level(entry.level));
        self.counters.get_mut(class).local_word_writes += 1;
        let tie = match outcome {
            Ok(_) => several,
            Err(ExtendError::Exhausted) => true,
            Err(ExtendError::NotACollision) => {
                return Err(FilterError::Corrupt(format!("{:?} does not collide with {x}", entry)));
            }
        };
        self.fixes.record(FixRecord {
            query: x,
            owner,
            query_generation: gen_x.id,
            owner_generation: owner_gen,
            level: entry.level,
            owner_epoch: self.fixes.epoch(owner),
            tie,
        });
        Ok(tie)
    }

    /// Advances the frontier past the next few keys, purging ghosts and
    /// rehashing live keys under the newer generation.
    fn reclaim_step(&mut self) -> Result<(), FilterError> {
        let batch = self.remote.next_keys_above(
            self.phase.frontier,
            self.params.reclaim_batch,
            &mut self.counters.adapt_reclaim,
        );
        for (k, kind) in batch {
            match kind {
                KeyKind::Ghost => {
                    self.purge_ghosts(k)?;
                    self.phase.frontier = Some(k);
                }
                KeyKind::Live => {
                    let old = self
                        .remote
                        .triple(k)
                        .ok_or_else(|| FilterError::Corrupt(format!("live key {k} has no triple")))?;
                    self.purge_ghosts(k)?;
                    let entry = self.own_entry(k, old, OpClass::AdaptReclaim)?;
                    self.counters.adapt_reclaim.local_word_writes += self.local.remove(&entry)? as u64;
                    self.phase.frontier = Some(k);
                    let (fp, new) = self.place(k, OpClass::AdaptReclaim, Placement::Rehash)?;
                    debug_assert_eq!(new.generation, self.phase.gen_b.id);
                    let t = &mut self.counters.adapt_reclaim;
                    t.local_word_writes += self.local.insert(fp)? as u64;
                    self.remote.rekey(k, old, new, t)?;
                }
            }
        }
        self.phase.advance_if_done(self.remote.max_key());
        Ok(())
    }

    fn purge_ghosts(&mut self, k: u64) -> Result<(), FilterError> {
        let t = &mut self.counters.adapt_reclaim;
        for ghost in self.remote.purge_ghosts(k, t) {
            self.local.purge_ghost(&ghost)?;
            t.local_word_writes += 1;
        }
        Ok(())
    }

    /// Checks prefix-freeness, the absence of false negatives, generation
    /// assignment, and agreement between the local and remote states.
    pub fn check_invariants(&self) -> Result<InvariantReport, InvariantViolation> {
        let fps = self.local.fingerprints();
        let ties = if self.adaptive {
            check_prefix_free(&self.params, &fps).map_err(|(a, b)| InvariantViolation::NotPrefixFree(a, b))?
        } else {
            0
        };
        self.check_consistency()?;
        for k in self.remote.live_keys() {
            if !self.lookup(k) {
                return Err(InvariantViolation::FalseNegative(k));
            }
        }
        Ok(InvariantReport {
            live: fps.len(),
            ghosts: self.remote.ghost_len(),
            ties,
        })
    }

    /// The cheaper part of [`BroomFilter::check_invariants`]: everything but
    /// the per-key lookups.
    pub fn check_consistency(&self) -> Result<(), InvariantViolation> {
        for k in self.remote.live_keys() {
            let t = self.remote.triple(k).ok_or(InvariantViolation::Index)?;
            let expect = self.phase.generation_of(k).id;
            if t.generation != expect {
                return Err(InvariantViolation::Generation(k, t.generation, expect));
            }
        }
        if !self.remote.index_consistent(|k| self.remote.triple(k)) {
            return Err(InvariantViolation::Index);
        }
        let m = self.local.measure();
        let pairs = [
            ("live entries", m.live, self.remote.live_len() as u64),
            ("ghosts", m.ghosts, self.remote.ghost_len() as u64),
        ];
        for (what, local, remote) in pairs {
            if local != remote {
                return Err(InvariantViolation::Count { what, local, remote });
            }
        }
        Ok(())
    }

    /// Serializes the whole filter state. The hasher is not included.
    pub fn save(&self) -> Vec<u8> {
        let body = SnapshotBody {
            params: self.params.clone(),
            phase: self.phase.clone(),
            adaptive: self.adaptive,
            local: self.local.clone(),
            remote: self.remote.clone(),
            counters: self.counters,
            fixes: self.fixes.clone(),
        };
        let mut out = Vec::new();
        out.extend_from_slice(SNAPSHOT_MAGIC);
        out.extend_from_slice(&SNAPSHOT_VERSION.to_le_bytes());
        serde_json::to_writer(&mut out, &body).expect("snapshot serializes");
        out
    }

    pub fn load(bytes: &[u8], hasher: H) -> Result<Self, SnapshotError> {
        if bytes.len() < 12 || &bytes[..8] != SNAPSHOT_MAGIC {
            return Err(SnapshotError::Magic);
        }
        let found = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        if found != SNAPSHOT_VERSION {
            return Err(SnapshotError::Version { found });
        }
        let body: SnapshotBody<S> = serde_json::from_slice(&bytes[12..])?;
        let mut remote = body.remote;
        remote.rebuild_indexes();
        Ok(BroomFilter {
            params: body.params,
            phase: body.phase,
            adaptive: body.adaptive,
            local: body.local,
            remote,
            counters: body.counters,
            fixes: body.fixes,
            hasher,
        })
    }
}

impl<S: FingerprintStore, H: KeyHasher> Amq for BroomFilter<S, H> {
    fn name(&self) -> &'static str {
        if self.adaptive {
            "broom"
        } else {
            "quotient"
        }
    }

    fn capacity(&self) -> u64 {
        self.params.n
    }

    fn len(&self) -> usize {
        BroomFilter::len(self)
    }

    fn lookup(&self, x: u64) -> bool {
        BroomFilter::lookup(self, x)
    }

    fn insert(&mut self, x: u64) -> Result<(), FilterError> {
        BroomFilter::insert(self, x)
    }

    fn delete(&mut self, x: u64) -> Result<(), FilterError> {
        BroomFilter::delete(self, x)
    }

    fn adapt(&mut self, x: u64) -> Result<(), FilterError> {
        BroomFilter::adapt(self, x)
    }

    fn checked_lookup(&mut self, x: u64, member: bool) -> Result<bool, FilterError> {
        debug_assert_eq!(member, self.remote.is_live(x));
        self.lookup_as(x, member)
    }

    fn counters(&self) -> AccessCounters {
        self.counters
    }

    fn space_bits(&self) -> u64 {
        self.space().total_bits()
    }

    fn adaptivity_bits(&self) -> u64 {
        self.space().adaptivity_bits
    }

    fn space_report(&self) -> Option<SpaceReport> {
        Some(self.space())
    }

    fn repeated_collisions(&self) -> u64 {
        self.fixes.repeats().len() as u64
    }

    fn collision_owner(&self, x: u64) -> Option<u64> {
        self.fixes.owners_of(x).next()
    }
}
