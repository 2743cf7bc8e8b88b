//! The word-packed store: quotient filters with three metadata bits per slot.
//!
//! `occupied[i]` marks a home slot whose quotient has a run, `continuation[i]`
//! marks a slot continuing the run of the slot before it, and `shifted[i]`
//! marks an entry that is not in its home slot. A slot is in use iff it is
//! occupied or shifted. A block is a maximal stretch of in-use slots; it is
//! decoded by walking forward from an unshifted slot, matching each run start
//! with the next occupied bit.

use serde::{Deserialize, Serialize};

use super::bitvec::{BitVec, PackedArray};
use super::group::{ghost_string, Group, GROUP_BUFFER_BITS};
use super::{
    levels, Backyard, FingerprintStore, Fingerprint, Geometry, GhostHandle, Level, LevelHashes,
    QueryMatch, SpaceReport, StoreError, GROUP_QUOTIENTS, OFFSET_BITS,
};
use crate::bits::BitString;
use crate::params::{Params, Regime};

#[derive(Debug, Clone, Copy)]
struct Elem {
    home: usize,
    pos: usize,
}

enum Plan {
    /// The home slot is free.
    Direct,
    /// Insert at `at`, shifting every entry in `[at, end)` one slot right.
    Shift { at: usize, end: usize, continues_run: bool },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct PackedLevel {
    geo: Geometry,
    occupied: BitVec,
    continuation: BitVec,
    shifted: BitVec,
    sigs: PackedArray,
    rest: PackedArray,
    groups: Vec<Group>,
    live: usize,
}

impl PackedLevel {
    fn new(geo: Geometry) -> Self {
        PackedLevel {
            geo,
            occupied: BitVec::new(geo.slots),
            continuation: BitVec::new(geo.slots),
            shifted: BitVec::new(geo.slots),
            sigs: PackedArray::new(geo.slots, geo.sig_bits),
            rest: PackedArray::new(geo.slots, geo.r_bits - geo.sig_bits),
            groups: vec![Group::default(); geo.groups()],
            live: 0,
        }
    }

    #[inline]
    fn in_use(&self, i: usize) -> bool {
        self.occupied.get(i) || self.shifted.get(i)
    }

    #[inline]
    fn remainder(&self, pos: usize) -> u64 {
        (self.sigs.get(pos) << (self.geo.r_bits - self.geo.sig_bits)) | self.rest.get(pos)
    }

    fn write_remainder(&mut self, pos: usize, rem: u64) {
        self.sigs.set(pos, self.geo.signature(rem));
        self.rest.set(pos, rem);
    }

    fn block_start(&self, i: usize) -> usize {
        let mut j = i;
        while self.shifted.get(j) {
            j -= 1;
        }
        j
    }

    /// Entries of the block starting at the unshifted slot `cs`.
    fn decode_block(&self, cs: usize) -> Vec<Elem> {
        let mut out = Vec::new();
        let mut home = cs;
        let mut cursor = cs;
        let mut j = cs;
        while j < self.geo.slots && self.in_use(j) {
            if !self.continuation.get(j) {
                home = self
                    .occupied
                    .first_one(cursor, j + 1)
                    .expect("every run start has an occupied home");
                cursor = home + 1;
            }
            out.push(Elem { home, pos: j });
            j += 1;
        }
        out
    }

    /// Slot range of the run whose home is `b`.
    fn run(&self, b: usize) -> Option<(usize, usize)> {
        if !self.occupied.get(b) {
            return None;
        }
        let elems = self.decode_block(self.block_start(b));
        let mut it = elems.iter().filter(|e| e.home == b);
        let first = it.next().expect("occupied home has a run").pos;
        let last = it.last().map_or(first, |e| e.pos);
        Some((first, last + 1))
    }

    /// Index, within its group, of the live string for the entry at `pos`.
    fn rank(&self, quotient: u64, pos: usize) -> usize {
        let lo = quotient - quotient % GROUP_QUOTIENTS;
        let b0 = self
            .occupied
            .first_one(self.geo.home(lo), self.geo.home(quotient) + 1)
            .expect("quotient has a run");
        let (start, _) = self.run(b0).expect("occupied");
        self.occupied.count_union(&self.shifted, start, pos)
    }

    fn group(&self, quotient: u64) -> &Group {
        &self.groups[(quotient / GROUP_QUOTIENTS) as usize]
    }

    fn group_mut(&mut self, quotient: u64) -> &mut Group {
        &mut self.groups[(quotient / GROUP_QUOTIENTS) as usize]
    }

    fn plan_insert(&self, b: usize) -> Option<Plan> {
        if !self.in_use(b) {
            return Some(Plan::Direct);
        }
        let cs = self.block_start(b);
        let elems = self.decode_block(cs);
        let idx = elems.partition_point(|e| e.home <= b);
        let prev = elems[idx - 1];
        let at = prev.pos + 1;
        let end = cs + elems.len();
        if end >= self.geo.slots {
            return None;
        }
        if let Some(cap) = self.geo.cap {
            if at - b > cap || elems[idx..].iter().any(|e| e.pos + 1 - e.home > cap) {
                return None;
            }
        }
        Some(Plan::Shift {
            at,
            end,
            continues_run: prev.home == b,
        })
    }

    fn split(&self, h: &BitString) -> (u64, u64) {
        (
            h.value(0, self.geo.q_bits as usize),
            h.value(self.geo.q_bits as usize, self.geo.r_bits as usize),
        )
    }

    fn baseline(&self) -> usize {
        (self.geo.q_bits + self.geo.r_bits) as usize
    }

    fn query(&self, h: &BitString, out: &mut QueryMatch, level: Level) {
        let (a, rem) = self.split(h);
        let Some((s, e)) = self.run(self.geo.home(a)) else {
            return;
        };
        out.probed += e - s;
        let base = self.rank(a, s);
        let group = self.group(a);
        let suffix = h.suffix(self.baseline());
        let hits = group.matches(&suffix, base..base + (e - s));
        for (i, pos) in (s..e).enumerate() {
            if self.remainder(pos) != rem {
                continue;
            }
            let mut bits = h.prefix(self.baseline());
            bits.append(&group.get(base + i));
            let fp = Fingerprint::new(level, bits);
            if hits.contains(&(base + i)) {
                out.full.push(fp);
            } else {
                out.hard.push(fp);
            }
        }
    }

    /// True when some entry in the run for `h`'s quotient shares its signature.
    fn partial_collision(&self, h: &BitString) -> bool {
        let (a, rem) = self.split(h);
        let sig = self.geo.signature(rem);
        self.run(self.geo.home(a))
            .is_some_and(|(s, e)| (s..e).any(|p| self.sigs.get(p) == sig))
    }

    /// Slot and group rank of a stored fingerprint.
    fn find(&self, bits: &BitString) -> Option<(usize, usize)> {
        let (a, rem) = self.split(bits);
        let (s, e) = self.run(self.geo.home(a))?;
        let base = self.rank(a, s);
        let adaptivity = bits.suffix(self.baseline());
        let group = self.group(a);
        (s..e)
            .enumerate()
            .find(|&(i, pos)| self.remainder(pos) == rem && group.get(base + i) == adaptivity)
            .map(|(i, pos)| (pos, base + i))
    }

    fn insert(&mut self, bits: &BitString) -> Option<usize> {
        let (a, rem) = self.split(bits);
        let b = self.geo.home(a);
        let (pos, written) = match self.plan_insert(b)? {
            Plan::Direct => {
                self.continuation.set(b, false);
                self.shifted.set(b, false);
                (b, 1)
            }
            Plan::Shift {
                at,
                end,
                continues_run,
            } => {
                for j in (at..end).rev() {
                    let r = self.remainder(j);
                    self.write_remainder(j + 1, r);
                    let c = self.continuation.get(j);
                    self.continuation.set(j + 1, c);
                    self.shifted.set(j + 1, true);
                }
                self.continuation.set(at, continues_run);
                self.shifted.set(at, at != b);
                (at, end - at + 1)
            }
        };
        self.write_remainder(pos, rem);
        self.occupied.set(b, true);
        let rank = self.rank(a, pos);
        let adaptivity = bits.suffix(self.baseline());
        self.group_mut(a).insert_live(rank, &adaptivity);
        self.live += 1;
        Some(written)
    }

    fn remove(&mut self, bits: &BitString) -> Option<usize> {
        let (pos, rank) = self.find(bits)?;
        let (a, _) = self.split(bits);
        self.group_mut(a).remove_live(rank);
        self.live -= 1;

        let cs = self.block_start(pos);
        let mut elems = self.decode_block(cs);
        let old_end = cs + elems.len();
        let i = elems.iter().position(|e| e.pos == pos).expect("entry in its block");
        let removed = elems.remove(i);
        let moved: Vec<(Elem, u64)> = elems[i..].iter().map(|&e| (e, self.remainder(e.pos))).collect();
        for j in pos..old_end {
            self.write_remainder(j, 0);
            self.continuation.set(j, false);
            self.shifted.set(j, false);
        }
        let mut prev = i.checked_sub(1).map(|k| elems[k]);
        let mut written = 1;
        for (e, rem) in moved {
            let new_pos = prev.map_or(e.home, |p| e.home.max(p.pos + 1));
            if new_pos != e.pos {
                written += 1;
            }
            self.write_remainder(new_pos, rem);
            self.continuation.set(new_pos, prev.is_some_and(|p| p.home == e.home));
            self.shifted.set(new_pos, new_pos != e.home);
            prev = Some(Elem {
                home: e.home,
                pos: new_pos,
            });
        }
        if !elems.iter().any(|e| e.home == removed.home) {
            self.occupied.set(removed.home, false);
        }
        Some(written)
    }

    fn replace(&mut self, old: &BitString, new: &BitString) -> bool {
        let Some((_, rank)) = self.find(old) else {
            return false;
        };
        let (a, _) = self.split(old);
        let adaptivity = new.suffix(self.baseline());
        self.group_mut(a).replace_live(rank, &adaptivity);
        true
    }

    fn add_ghost(&mut self, quotient: u64, adaptivity: &BitString) {
        self.group_mut(quotient).push_ghost(&ghost_string(quotient, adaptivity));
    }

    fn ghost_match(&self, h: &BitString) -> Option<BitString> {
        let (a, _) = self.split(h);
        let group = self.group(a);
        let query = ghost_string(a, &h.suffix(self.baseline()));
        group
            .matches(&query, group.live()..group.len())
            .into_iter()
            .map(|i| group.get(i))
            .max_by_key(|s| s.len())
            .map(|s| s.suffix(OFFSET_BITS))
    }

    fn fingerprints(&self, level: Level, out: &mut Vec<Fingerprint>) {
        let mut ranks = vec![0usize; self.groups.len()];
        let mut j = 0;
        while j < self.geo.slots {
            if !self.in_use(j) {
                j += 1;
                continue;
            }
            let elems = self.decode_block(j);
            for e in &elems {
                let a = self.geo.quotient_at(e.home);
                let g = (a / GROUP_QUOTIENTS) as usize;
                let mut bits = BitString::from_value(a, self.geo.q_bits as usize);
                bits.push_value(self.remainder(e.pos), self.geo.r_bits as usize);
                bits.append(&self.groups[g].get(ranks[g]));
                ranks[g] += 1;
                out.push(Fingerprint::new(level, bits));
            }
            j += elems.len();
        }
    }

    fn ghosts(&self, level: Level, out: &mut Vec<GhostHandle>) {
        for (g, group) in self.groups.iter().enumerate() {
            for s in group.ghost_strings() {
                out.push(GhostHandle {
                    level,
                    quotient: g as u64 * GROUP_QUOTIENTS + s.value(0, OFFSET_BITS),
                    adaptivity: s.suffix(OFFSET_BITS),
                });
            }
        }
    }

    /// (slot bits, metadata bits, group bits, spill bits) plus content tallies.
    fn measure(&self, r: &mut SpaceReport) -> [u64; 4] {
        let mut spill = 0;
        for g in &self.groups {
            let bits = g.adaptivity_bits() as u64;
            r.adaptivity_bits += bits;
            r.ghosts += g.ghosts() as u64;
            if g.is_spilled() {
                r.spilled_groups += 1;
                spill += 2 * g.positions() as u64;
            } else {
                r.max_group_adaptivity_bits = r.max_group_adaptivity_bits.max(bits);
            }
        }
        r.live += self.live as u64;
        [
            self.geo.slot_bits(),
            self.geo.metadata_bits(),
            self.groups.len() as u64 * GROUP_BUFFER_BITS,
            spill,
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PackedStore {
    params: Params,
    primary: PackedLevel,
    secondary: Option<PackedLevel>,
    backyard: Option<Backyard>,
}

impl PackedStore {
    fn level(&self, level: Level) -> &PackedLevel {
        match level {
            Level::Primary => &self.primary,
            Level::Secondary => self.secondary.as_ref().expect("small-remainder regime"),
            Level::Backyard => unreachable!("backyard is not a quotient filter"),
        }
    }

    fn level_mut(&mut self, level: Level) -> &mut PackedLevel {
        match level {
            Level::Primary => &mut self.primary,
            Level::Secondary => self.secondary.as_mut().expect("small-remainder regime"),
            Level::Backyard => unreachable!("backyard is not a quotient filter"),
        }
    }

    fn backyard_mut(&mut self) -> &mut Backyard {
        self.backyard.as_mut().expect("large-remainder regime")
    }

    fn check_len(&self, fp: &Fingerprint) -> Result<(), StoreError> {
        let len = fp.bits.len();
        let ok = match fp.level {
            Level::Backyard => len == self.params.hash_bits,
            _ => len >= self.params.baseline_bits() && len <= self.params.hash_bits,
        };
        ok.then_some(()).ok_or(StoreError::BadLength)
    }

    fn take(&mut self, fp: &Fingerprint) -> Result<usize, StoreError> {
        let found = match fp.level {
            Level::Backyard => self.backyard_mut().remove(&fp.bits).then_some(1),
            level => self.level_mut(level).remove(&fp.bits),
        };
        found.ok_or(StoreError::NotFound(*fp))
    }
}

impl FingerprintStore for PackedStore {
    fn new(params: &Params) -> Self {
        let (primary, secondary) = levels(params);
        PackedStore {
            params: params.clone(),
            primary: PackedLevel::new(primary),
            secondary: secondary.map(PackedLevel::new),
            backyard: (params.regime == Regime::LargeRemainder)
                .then(|| Backyard::new(params.backyard_capacity, params.backyard_limit, params.baseline_bits())),
        }
    }

    fn params(&self) -> &Params {
        &self.params
    }

    fn choose_level(&self, hashes: &LevelHashes) -> Level {
        let b = self.primary.geo.home(self.primary.split(&hashes.primary).0);
        let fits = self.primary.plan_insert(b).is_some();
        match self.params.regime {
            Regime::SmallRemainder if fits => Level::Primary,
            Regime::SmallRemainder => Level::Secondary,
            Regime::LargeRemainder if fits && !self.primary.partial_collision(&hashes.primary) => {
                Level::Primary
            }
            Regime::LargeRemainder => Level::Backyard,
        }
    }

    fn query(&self, hashes: &LevelHashes) -> QueryMatch {
        let mut out = QueryMatch::default();
        self.primary.query(&hashes.primary, &mut out, Level::Primary);
        if let Some(by) = &self.backyard {
            let bucket = by.bucket(&hashes.primary);
            out.probed += bucket.len();
            for h in bucket {
                let fp = Fingerprint::new(Level::Backyard, *h);
                if *h == hashes.primary {
                    out.full.push(fp);
                } else {
                    out.hard.push(fp);
                }
            }
        }
        if let (Some(level), Some(h)) = (&self.secondary, &hashes.secondary) {
            level.query(h, &mut out, Level::Secondary);
        }
        out
    }

    fn insert(&mut self, fp: Fingerprint) -> Result<usize, StoreError> {
        self.check_len(&fp)?;
        let placed = match fp.level {
            Level::Backyard => self.backyard_mut().insert(fp.bits).then_some(1),
            level => self.level_mut(level).insert(&fp.bits),
        };
        placed.ok_or(StoreError::Full(fp.level))
    }

    fn replace(&mut self, old: &Fingerprint, bits: BitString) -> Result<usize, StoreError> {
        let new = Fingerprint::new(old.level, bits);
        self.check_len(&new)?;
        if !old.bits.is_prefix_of(&bits) {
            return Err(StoreError::BadLength);
        }
        let done = match old.level {
            Level::Backyard => self.backyard.as_ref().is_some_and(|b| b.bucket(&bits).contains(&bits)),
            level => self.level_mut(level).replace(&old.bits, &bits),
        };
        done.then_some(1).ok_or(StoreError::NotFound(*old))
    }

    fn delete(&mut self, fp: &Fingerprint) -> Result<(GhostHandle, usize), StoreError> {
        let written = self.take(fp)?;
        let ghost = match fp.level {
            Level::Backyard => GhostHandle {
                level: Level::Primary,
                quotient: fp.quotient(&self.params),
                adaptivity: BitString::new(),
            },
            level => GhostHandle {
                level,
                quotient: fp.quotient(&self.params),
                adaptivity: fp.adaptivity(&self.params),
            },
        };
        self.level_mut(ghost.level).add_ghost(ghost.quotient, &ghost.adaptivity);
        Ok((ghost, written + 1))
    }

    fn remove(&mut self, fp: &Fingerprint) -> Result<usize, StoreError> {
        self.take(fp)
    }

    fn ghost_match(&self, level: Level, hash: &BitString) -> Option<BitString> {
        match level {
            Level::Backyard => None,
            level => self.level(level).ghost_match(hash),
        }
    }

    fn purge_ghost(&mut self, ghost: &GhostHandle) -> Result<(), StoreError> {
        if ghost.level == Level::Backyard
            || (ghost.level == Level::Secondary && self.secondary.is_none())
        {
            return Err(StoreError::StaleGhost(*ghost));
        }
        let s = ghost_string(ghost.quotient, &ghost.adaptivity);
        let level = self.level_mut(ghost.level);
        if ghost.quotient >= level.geo.quotients || !level.group_mut(ghost.quotient).remove_ghost(&s) {
            return Err(StoreError::StaleGhost(*ghost));
        }
        Ok(())
    }

    fn measure(&self) -> SpaceReport {
        let mut r = SpaceReport::default();
        let [slot, meta, group, spill] = self.primary.measure(&mut r);
        r.slot_bits = slot;
        r.metadata_bits = meta;
        r.group_bits = group;
        r.spill_bits = spill;
        if let Some(level) = &self.secondary {
            r.secondary_bits = level.measure(&mut r).iter().sum();
        }
        if let Some(by) = &self.backyard {
            r.backyard_bits = by.provisioned() as u64 * self.params.hash_bits as u64;
            r.live += by.len() as u64;
        }
        r
    }

    fn fingerprints(&self) -> Vec<Fingerprint> {
        let mut out = Vec::new();
        self.primary.fingerprints(Level::Primary, &mut out);
        if let Some(level) = &self.secondary {
            level.fingerprints(Level::Secondary, &mut out);
        }
        if let Some(by) = &self.backyard {
            out.extend(by.iter().map(|h| Fingerprint::new(Level::Backyard, *h)));
        }
        out.sort();
        out
    }

    fn ghosts(&self) -> Vec<GhostHandle> {
        let mut out = Vec::new();
        self.primary.ghosts(Level::Primary, &mut out);
        if let Some(level) = &self.secondary {
            level.ghosts(Level::Secondary, &mut out);
        }
        out.sort();
        out
    }
}
