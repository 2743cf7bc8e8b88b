//! Adaptivity-bit groups.
//!
//! Each group covers [`GROUP_QUOTIENTS`] consecutive quotients. Its strings
//! are the adaptivity bits of the group's live fingerprints in slot order,
//! followed by its ghosts. A ghost string is the quotient's offset within the
//! group ([`OFFSET_BITS`] bits) followed by the ghost's adaptivity bits, so a
//! single prefix match over the ghost range finds every ghost for a hash.
//!
//! A group lives in a [`PackedStrings`] buffer while its content fits and in
//! a plain spill list when it does not. The choice is a pure function of the
//! content, so both store builds agree on it.

use serde::{Deserialize, Serialize};

use crate::bits::BitString;
use crate::wordops::{PackedStrings, CAPACITY};

pub(crate) const GROUP_QUOTIENTS: u64 = 64;
pub(crate) const OFFSET_BITS: usize = 6;
/// Bits of one group buffer: data plus markers.
pub(crate) const GROUP_BUFFER_BITS: u64 = 2 * CAPACITY as u64;

/// Buffer positions a set of strings needs (one marker each plus their bits).
pub(crate) fn group_positions(lens: impl IntoIterator<Item = usize>) -> usize {
    lens.into_iter().map(|l| l + 1).sum()
}

pub(crate) fn ghost_string(quotient: u64, adaptivity: &BitString) -> BitString {
    let mut s = BitString::from_value(quotient % GROUP_QUOTIENTS, OFFSET_BITS);
    s.append(adaptivity);
    s
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
enum Buf {
    Packed(PackedStrings),
    Spilled(Vec<BitString>),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub(crate) struct Group {
    live: u32,
    buf: Buf,
}

impl Default for Group {
    fn default() -> Self {
        Group {
            live: 0,
            buf: Buf::Packed(PackedStrings::new()),
        }
    }
}

impl Group {
    pub fn len(&self) -> usize {
        match &self.buf {
            Buf::Packed(p) => p.len(),
            Buf::Spilled(v) => v.len(),
        }
    }

    pub fn live(&self) -> usize {
        self.live as usize
    }

    pub fn ghosts(&self) -> usize {
        self.len() - self.live()
    }

    pub fn is_spilled(&self) -> bool {
        matches!(self.buf, Buf::Spilled(_))
    }

    pub fn positions(&self) -> usize {
        match &self.buf {
            Buf::Packed(p) => p.used(),
            Buf::Spilled(v) => group_positions(v.iter().map(|s| s.len())),
        }
    }

    /// Adaptivity bits held, excluding ghost offsets.
    pub fn adaptivity_bits(&self) -> usize {
        let total = match &self.buf {
            Buf::Packed(p) => p.bit_len(),
            Buf::Spilled(v) => v.iter().map(|s| s.len()).sum(),
        };
        total - self.ghosts() * OFFSET_BITS
    }

    pub fn get(&self, i: usize) -> BitString {
        match &self.buf {
            Buf::Packed(p) => p.get(i),
            Buf::Spilled(v) => v[i],
        }
    }

    /// Indices in `range` whose strings are prefixes of `query`.
    pub fn matches(&self, query: &BitString, range: std::ops::Range<usize>) -> Vec<usize> {
        match &self.buf {
            Buf::Packed(p) => p
                .prefix_match(query, range)
                .expect("group range within bounds")
                .iter()
                .collect(),
            Buf::Spilled(v) => range.filter(|&i| v[i].is_prefix_of(query)).collect(),
        }
    }

    pub fn insert_live(&mut self, rank: usize, s: &BitString) {
        assert!(rank <= self.live());
        self.insert_at(rank, s);
        self.live += 1;
    }

    pub fn remove_live(&mut self, rank: usize) -> BitString {
        assert!(rank < self.live());
        self.live -= 1;
        self.remove_at(rank)
    }

    pub fn replace_live(&mut self, rank: usize, s: &BitString) {
        assert!(rank < self.live());
        self.remove_at(rank);
        self.insert_at(rank, s);
    }

    pub fn push_ghost(&mut self, s: &BitString) {
        self.insert_at(self.len(), s);
    }

    /// Removes the first ghost equal to `s`; false if there is none.
    pub fn remove_ghost(&mut self, s: &BitString) -> bool {
        let found = (self.live()..self.len()).find(|&i| self.get(i) == *s);
        match found {
            Some(i) => {
                self.remove_at(i);
                true
            }
            None => false,
        }
    }

    pub fn ghost_strings(&self) -> impl Iterator<Item = BitString> + '_ {
        (self.live()..self.len()).map(|i| self.get(i))
    }

    fn insert_at(&mut self, i: usize, s: &BitString) {
        if let Buf::Packed(p) = &mut self.buf {
            if p.insert(i, s, false).is_ok() {
                return;
            }
            self.buf = Buf::Spilled(p.iter().collect());
        }
        if let Buf::Spilled(v) = &mut self.buf {
            v.insert(i, *s);
        }
    }

    fn remove_at(&mut self, i: usize) -> BitString {
        match &mut self.buf {
            Buf::Packed(p) => p.delete(i).expect("index within bounds").0,
            Buf::Spilled(v) => {
                let s = v.remove(i);
                if group_positions(v.iter().map(|s| s.len())) <= CAPACITY {
                    let packed = PackedStrings::from_strings(v.iter()).expect("content fits");
                    self.buf = Buf::Packed(packed);
                }
                s
            }
        }
    }
}
