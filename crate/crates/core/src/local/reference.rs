//! The reference store: every slot holds its entry's home and full
//! fingerprint explicitly, and ghosts sit in a plain list.

use serde::{Deserialize, Serialize};

use super::group::{group_positions, GROUP_BUFFER_BITS};
use super::{
    levels, Backyard, FingerprintStore, Fingerprint, Geometry, GhostHandle, Level, LevelHashes,
    QueryMatch, SpaceReport, StoreError, GROUP_QUOTIENTS, OFFSET_BITS,
};
use crate::bits::BitString;
use crate::params::{Params, Regime};
use crate::wordops::CAPACITY;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct Slot {
    home: usize,
    bits: BitString,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct RefLevel {
    geo: Geometry,
    slots: Vec<Option<Slot>>,
    /// `(quotient, adaptivity)` in creation order.
    ghosts: Vec<(u64, BitString)>,
}

impl RefLevel {
    fn new(geo: Geometry) -> Self {
        RefLevel {
            geo,
            slots: vec![None; geo.slots],
            ghosts: Vec::new(),
        }
    }

    fn baseline(&self) -> usize {
        (self.geo.q_bits + self.geo.r_bits) as usize
    }

    fn home_of(&self, bits: &BitString) -> usize {
        self.geo.home(bits.value(0, self.geo.q_bits as usize))
    }

    /// Slots holding the run whose home is `b`.
    fn run(&self, b: usize) -> Vec<usize> {
        let mut out = Vec::new();
        let mut j = b;
        while let Some(Some(s)) = self.slots.get(j) {
            if s.home > b {
                break;
            }
            if s.home == b {
                out.push(j);
            }
            j += 1;
        }
        out
    }

    /// Where an entry with home `b` would go, and the first free slot at or
    /// after it, if the insertion respects the displacement cap.
    fn plan(&self, b: usize) -> Option<(usize, usize)> {
        let mut at = b;
        while let Some(Some(s)) = self.slots.get(at) {
            if s.home > b {
                break;
            }
            at += 1;
        }
        let mut end = at;
        while let Some(Some(_)) = self.slots.get(end) {
            end += 1;
        }
        if end >= self.slots.len() {
            return None;
        }
        if let Some(cap) = self.geo.cap {
            if at - b > cap {
                return None;
            }
            for j in at..end {
                if j + 1 - self.slots[j].as_ref().unwrap().home > cap {
                    return None;
                }
            }
        }
        Some((at, end))
    }

    fn query(&self, h: &BitString, out: &mut QueryMatch, level: Level) {
        let run = self.run(self.home_of(h));
        out.probed += run.len();
        let baseline = h.prefix(self.baseline());
        for j in run {
            let s = self.slots[j].as_ref().unwrap();
            if s.bits.is_prefix_of(h) {
                out.full.push(Fingerprint::new(level, s.bits));
            } else if s.bits.prefix(self.baseline()) == baseline {
                out.hard.push(Fingerprint::new(level, s.bits));
            }
        }
    }

    fn partial_collision(&self, h: &BitString) -> bool {
        let q = self.geo.q_bits as usize;
        let sig = self.geo.sig_bits as usize;
        let want = h.value(q, sig);
        self.run(self.home_of(h))
            .into_iter()
            .any(|j| self.slots[j].as_ref().unwrap().bits.value(q, sig) == want)
    }

    fn find(&self, bits: &BitString) -> Option<usize> {
        self.run(self.home_of(bits))
            .into_iter()
            .find(|&j| self.slots[j].as_ref().unwrap().bits == *bits)
    }

    fn insert(&mut self, bits: &BitString) -> Option<usize> {
        let b = self.home_of(bits);
        let (at, end) = self.plan(b)?;
        for j in (at..end).rev() {
            self.slots[j + 1] = self.slots[j].take();
        }
        self.slots[at] = Some(Slot { home: b, bits: *bits });
        Some(end - at + 1)
    }

    fn remove(&mut self, bits: &BitString) -> Option<usize> {
        let mut j = self.find(bits)?;
        self.slots[j] = None;
        let mut written = 1;
        // Pull displaced successors back one slot at a time.
        while let Some(Some(s)) = self.slots.get(j + 1) {
            if s.home > j {
                break;
            }
            self.slots[j] = self.slots[j + 1].take();
            written += 1;
            j += 1;
        }
        Some(written)
    }

    fn replace(&mut self, old: &BitString, new: &BitString) -> bool {
        match self.find(old) {
            Some(j) => {
                self.slots[j].as_mut().unwrap().bits = *new;
                true
            }
            None => false,
        }
    }

    fn ghost_match(&self, h: &BitString) -> Option<BitString> {
        let a = h.value(0, self.geo.q_bits as usize);
        let rest = h.suffix(self.baseline());
        self.ghosts
            .iter()
            .filter(|(q, g)| *q == a && g.is_prefix_of(&rest))
            .map(|(_, g)| *g)
            .max_by_key(|g| g.len())
    }

    fn entries(&self) -> impl Iterator<Item = &Slot> {
        self.slots.iter().flatten()
    }

    fn measure(&self, r: &mut SpaceReport) -> [u64; 4] {
        let groups = self.geo.groups();
        let mut lens: Vec<Vec<usize>> = vec![Vec::new(); groups];
        let mut bits = vec![0u64; groups];
        for s in self.entries() {
            let g = (self.geo.quotient_at(s.home) / GROUP_QUOTIENTS) as usize;
            let a = s.bits.len() - self.baseline();
            lens[g].push(a);
            bits[g] += a as u64;
            r.live += 1;
        }
        for (q, a) in &self.ghosts {
            let g = (q / GROUP_QUOTIENTS) as usize;
            lens[g].push(OFFSET_BITS + a.len());
            bits[g] += a.len() as u64;
            r.ghosts += 1;
        }
        let mut spill = 0;
        for g in 0..groups {
            r.adaptivity_bits += bits[g];
            let positions = group_positions(lens[g].iter().copied());
            if positions > CAPACITY {
                r.spilled_groups += 1;
                spill += 2 * positions as u64;
            } else {
                r.max_group_adaptivity_bits = r.max_group_adaptivity_bits.max(bits[g]);
            }
        }
        [
            self.geo.slot_bits(),
            self.geo.metadata_bits(),
            groups as u64 * GROUP_BUFFER_BITS,
            spill,
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceStore {
    params: Params,
    primary: RefLevel,
    secondary: Option<RefLevel>,
    backyard: Option<Backyard>,
}

impl ReferenceStore {
    fn level(&self, level: Level) -> Option<&RefLevel> {
        match level {
            Level::Primary => Some(&self.primary),
            Level::Secondary => self.secondary.as_ref(),
            Level::Backyard => None,
        }
    }

    fn level_mut(&mut self, level: Level) -> Option<&mut RefLevel> {
        match level {
            Level::Primary => Some(&mut self.primary),
            Level::Secondary => self.secondary.as_mut(),
            Level::Backyard => None,
        }
    }

    fn valid_len(&self, fp: &Fingerprint) -> bool {
        let len = fp.bits.len();
        match fp.level {
            Level::Backyard => len == self.params.hash_bits,
            _ => len >= self.params.baseline_bits() && len <= self.params.hash_bits,
        }
    }

    fn take(&mut self, fp: &Fingerprint) -> Result<usize, StoreError> {
        let found = match fp.level {
            Level::Backyard => self.backyard.as_mut().and_then(|b| b.remove(&fp.bits).then_some(1)),
            level => self.level_mut(level).and_then(|l| l.remove(&fp.bits)),
        };
        found.ok_or(StoreError::NotFound(*fp))
    }
}

impl FingerprintStore for ReferenceStore {
    fn new(params: &Params) -> Self {
        let (primary, secondary) = levels(params);
        ReferenceStore {
            params: params.clone(),
            primary: RefLevel::new(primary),
            secondary: secondary.map(RefLevel::new),
            backyard: (params.regime == Regime::LargeRemainder)
                .then(|| Backyard::new(params.backyard_capacity, params.backyard_limit, params.baseline_bits())),
        }
    }

    fn params(&self) -> &Params {
        &self.params
    }

    fn choose_level(&self, hashes: &LevelHashes) -> Level {
        let h = &hashes.primary;
        let fits = self.primary.plan(self.primary.home_of(h)).is_some();
        match self.params.regime {
            Regime::SmallRemainder => {
                if fits {
                    Level::Primary
                } else {
                    Level::Secondary
                }
            }
            Regime::LargeRemainder => {
                if fits && !self.primary.partial_collision(h) {
                    Level::Primary
                } else {
                    Level::Backyard
                }
            }
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
        if !self.valid_len(&fp) {
            return Err(StoreError::BadLength);
        }
        let placed = match fp.level {
            Level::Backyard => self.backyard.as_mut().and_then(|b| b.insert(fp.bits).then_some(1)),
            level => self.level_mut(level).and_then(|l| l.insert(&fp.bits)),
        };
        placed.ok_or(StoreError::Full(fp.level))
    }

    fn replace(&mut self, old: &Fingerprint, bits: BitString) -> Result<usize, StoreError> {
        if !self.valid_len(&Fingerprint::new(old.level, bits)) || !old.bits.is_prefix_of(&bits) {
            return Err(StoreError::BadLength);
        }
        let done = match old.level {
            Level::Backyard => self.backyard.as_ref().is_some_and(|b| b.bucket(&bits).contains(&bits)),
            level => self.level_mut(level).is_some_and(|l| l.replace(&old.bits, &bits)),
        };
        done.then_some(1).ok_or(StoreError::NotFound(*old))
    }

    fn delete(&mut self, fp: &Fingerprint) -> Result<(GhostHandle, usize), StoreError> {
        let written = self.take(fp)?;
        let quotient = fp.quotient(&self.params);
        let (level, adaptivity) = match fp.level {
            Level::Backyard => (Level::Primary, BitString::new()),
            level => (level, fp.adaptivity(&self.params)),
        };
        self.level_mut(level).unwrap().ghosts.push((quotient, adaptivity));
        Ok((
            GhostHandle {
                level,
                quotient,
                adaptivity,
            },
            written + 1,
        ))
    }

    fn remove(&mut self, fp: &Fingerprint) -> Result<usize, StoreError> {
        self.take(fp)
    }

    fn ghost_match(&self, level: Level, hash: &BitString) -> Option<BitString> {
        self.level(level)?.ghost_match(hash)
    }

    fn purge_ghost(&mut self, ghost: &GhostHandle) -> Result<(), StoreError> {
        let level = self
            .level_mut(ghost.level)
            .ok_or(StoreError::StaleGhost(*ghost))?;
        let i = level
            .ghosts
            .iter()
            .position(|(q, a)| *q == ghost.quotient && *a == ghost.adaptivity)
            .ok_or(StoreError::StaleGhost(*ghost))?;
        level.ghosts.remove(i);
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
        let mut out: Vec<Fingerprint> = self
            .primary
            .entries()
            .map(|s| Fingerprint::new(Level::Primary, s.bits))
            .collect();
        if let Some(level) = &self.secondary {
            out.extend(level.entries().map(|s| Fingerprint::new(Level::Secondary, s.bits)));
        }
        if let Some(by) = &self.backyard {
            out.extend(by.iter().map(|h| Fingerprint::new(Level::Backyard, *h)));
        }
        out.sort();
        out
    }

    fn ghosts(&self) -> Vec<GhostHandle> {
        let mut out = Vec::new();
        for (level, l) in [(Level::Primary, Some(&self.primary)), (Level::Secondary, self.secondary.as_ref())] {
            if let Some(l) = l {
                out.extend(l.ghosts.iter().map(|(q, a)| GhostHandle {
                    level,
                    quotient: *q,
                    adaptivity: *a,
                }));
            }
        }
        out.sort();
        out
    }
}
