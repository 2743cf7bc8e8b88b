//! Word-parallel operations on short packed bit strings.
//!
//! A [`PackedStrings`] buffer holds a sequence of variable-length bit strings
//! inside four 64-bit words. Each string occupies one marker position
//! followed by its bits; a parallel marker mask has a set bit at every
//! marker, so empty strings are representable. The data bit stored at a
//! marker position is a free per-string flag.
//!
//! ```text
//! strings:  "01"   ""   "110"
//! marks:    1 0 0  1    1 0 0 0
//! data:     f 0 1  f    f 1 1 0     (f = flag bit)
//! ```
//!
//! Every operation touches only the two four-word arrays: masks, shifts, and
//! popcounts over a constant number of words.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::bits::{read_bits, BitString};

/// Buffer capacity in positions (markers plus string bits).
pub const CAPACITY: usize = 256;
const WORDS: usize = CAPACITY / 64;

type Buf = [u64; WORDS];

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum WordOpsError {
    #[error("range {start}..{end} out of bounds for {count} strings")]
    Range { start: usize, end: usize, count: usize },
    #[error("rank {rank} out of bounds for {count} strings")]
    Rank { rank: usize, count: usize },
    #[error("buffer overflow: {needed} positions needed, capacity {CAPACITY}")]
    Overflow { needed: usize },
}

/// A set of string indices, as returned by the parallel queries.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct IndexSet {
    words: Buf,
}

impl IndexSet {
    pub fn insert(&mut self, i: usize) {
        self.words[i / 64] |= 1 << (i % 64);
    }

    pub fn contains(&self, i: usize) -> bool {
        i < CAPACITY && self.words[i / 64] >> (i % 64) & 1 == 1
    }

    pub fn len(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        (0..WORDS).flat_map(move |w| {
            let mut bits = self.words[w];
            std::iter::from_fn(move || {
                if bits == 0 {
                    return None;
                }
                let t = bits.trailing_zeros() as usize;
                bits &= bits - 1;
                Some(w * 64 + t)
            })
        })
    }
}

impl FromIterator<usize> for IndexSet {
    fn from_iter<T: IntoIterator<Item = usize>>(iter: T) -> Self {
        let mut s = IndexSet::default();
        for i in iter {
            s.insert(i);
        }
        s
    }
}

/// Concatenated bit strings in a fixed 256-position buffer.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PackedStrings {
    data: Buf,
    marks: Buf,
    count: u16,
    used: u16,
}

impl PackedStrings {
    pub fn new() -> Self {
        Self::default()
    }

    /// Packs `strings` (all flags clear).
    pub fn from_strings<'a>(
        strings: impl IntoIterator<Item = &'a BitString>,
    ) -> Result<Self, WordOpsError> {
        let mut p = PackedStrings::new();
        for s in strings {
            let n = p.len();
            p.insert(n, s, false)?;
        }
        Ok(p)
    }

    /// Number of strings.
    #[inline]
    pub fn len(&self) -> usize {
        self.count as usize
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    /// Positions in use (one marker per string plus all string bits).
    #[inline]
    pub fn used(&self) -> usize {
        self.used as usize
    }

    /// Total string bits, excluding markers.
    pub fn bit_len(&self) -> usize {
        self.used() - self.len()
    }

    /// Positions an additional string of `len` bits would need.
    pub fn fits(&self, len: usize) -> bool {
        self.used() + 1 + len <= CAPACITY
    }

    pub fn raw_words(&self) -> ([u64; WORDS], [u64; WORDS]) {
        (self.data, self.marks)
    }

    /// Rebuilds a buffer from raw words, validating the marker structure.
    pub fn from_raw(data: [u64; WORDS], marks: [u64; WORDS], used: usize) -> Option<Self> {
        if used > CAPACITY {
            return None;
        }
        let count: u32 = marks.iter().map(|w| w.count_ones()).sum();
        let p = PackedStrings {
            data,
            marks,
            count: count as u16,
            used: used as u16,
        };
        let beyond = mask_from(used);
        let stray = (0..WORDS).any(|w| (marks[w] | data[w]) & beyond[w] != 0);
        let starts_ok = count == 0 || get_bit(&marks, 0);
        (!stray && starts_ok).then_some(p)
    }

    fn start(&self, i: usize) -> usize {
        select(&self.marks, i)
    }

    fn end(&self, i: usize) -> usize {
        if i + 1 < self.len() {
            self.start(i + 1)
        } else {
            self.used()
        }
    }

    fn check_rank(&self, rank: usize, count: usize) -> Result<(), WordOpsError> {
        if rank < count {
            Ok(())
        } else {
            Err(WordOpsError::Rank { rank, count })
        }
    }

    fn check_range(&self, range: &Range<usize>) -> Result<(), WordOpsError> {
        if range.start <= range.end && range.end <= self.len() {
            Ok(())
        } else {
            Err(WordOpsError::Range {
                start: range.start,
                end: range.end,
                count: self.len(),
            })
        }
    }

    /// Length of string `i`.
    pub fn string_len(&self, i: usize) -> usize {
        let start = self.start(i);
        self.end(i) - start - 1
    }

    /// Copies out string `i`.
    pub fn get(&self, i: usize) -> BitString {
        assert!(i < self.len(), "rank {i} out of bounds");
        let start = self.start(i) + 1;
        let end = self.end(i);
        let mut out = BitString::new();
        let mut p = start;
        while p < end {
            let take = (end - p).min(64);
            out.push_value(read_bits(&self.data, p, take), take);
            p += take;
        }
        out
    }

    pub fn flag(&self, i: usize) -> bool {
        assert!(i < self.len(), "rank {i} out of bounds");
        get_bit(&self.data, self.start(i))
    }

    pub fn set_flag(&mut self, i: usize, flag: bool) {
        assert!(i < self.len(), "rank {i} out of bounds");
        let p = self.start(i);
        write_bits(&mut self.data, p, 1, flag as u64);
    }

    pub fn iter(&self) -> impl Iterator<Item = BitString> + '_ {
        (0..self.len()).map(move |i| self.get(i))
    }

    /// Longest common prefix of string `i` with `query`, given its bounds.
    fn lcp_at(&self, start: usize, end: usize, query: &BitString) -> usize {
        let len = end - start - 1;
        let limit = len.min(query.len());
        let mut off = 0;
        while off < limit {
            let take = (limit - off).min(64);
            let a = read_bits(&self.data, start + 1 + off, take);
            let b = query.value(off, take);
            let diff = a ^ b;
            if diff != 0 {
                return off + diff.leading_zeros() as usize - (64 - take);
            }
            off += take;
        }
        limit
    }

    /// Strings in `range` that are prefixes of `query`.
    pub fn prefix_match(
        &self,
        query: &BitString,
        range: Range<usize>,
    ) -> Result<IndexSet, WordOpsError> {
        self.check_range(&range)?;
        let mut out = IndexSet::default();
        if range.is_empty() {
            return Ok(out);
        }
        let mut start = self.start(range.start);
        for i in range {
            let end = self.end(i);
            let len = end - start - 1;
            if len <= query.len() && self.lcp_at(start, end, query) == len {
                out.insert(i);
            }
            start = end;
        }
        Ok(out)
    }

    /// Longest-common-prefix length of each string in `range` with `query`.
    pub fn prefix_lengths(
        &self,
        query: &BitString,
        range: Range<usize>,
    ) -> Result<Vec<usize>, WordOpsError> {
        self.check_range(&range)?;
        if range.is_empty() {
            return Ok(Vec::new());
        }
        let mut start = self.start(range.start);
        let mut out = Vec::with_capacity(range.len());
        for i in range {
            let end = self.end(i);
            out.push(self.lcp_at(start, end, query));
            start = end;
        }
        Ok(out)
    }

    /// Inserts `s` as the new string of rank `rank`.
    pub fn insert(&mut self, rank: usize, s: &BitString, flag: bool) -> Result<(), WordOpsError> {
        self.check_rank(rank, self.len() + 1)?;
        let needed = self.used() + 1 + s.len();
        if needed > CAPACITY {
            return Err(WordOpsError::Overflow { needed });
        }
        let at = if rank < self.len() {
            self.start(rank)
        } else {
            self.used()
        };
        let width = 1 + s.len();
        insert_gap(&mut self.data, at, width);
        insert_gap(&mut self.marks, at, width);
        write_bits(&mut self.marks, at, 1, 1);
        write_bits(&mut self.data, at, 1, flag as u64);
        let mut off = 0;
        while off < s.len() {
            let take = (s.len() - off).min(64);
            write_bits(&mut self.data, at + 1 + off, take, s.value(off, take));
            off += take;
        }
        self.count += 1;
        self.used = needed as u16;
        Ok(())
    }

    /// Removes the string of rank `rank`, returning it and its flag.
    pub fn delete(&mut self, rank: usize) -> Result<(BitString, bool), WordOpsError> {
        self.check_rank(rank, self.len())?;
        let s = self.get(rank);
        let flag = self.flag(rank);
        let at = self.start(rank);
        let width = 1 + s.len();
        remove_range(&mut self.data, at, width);
        remove_range(&mut self.marks, at, width);
        self.count -= 1;
        self.used -= width as u16;
        Ok((s, flag))
    }

    /// Replaces string `rank` with `s`, keeping its flag. On overflow the
    /// buffer is left unchanged.
    pub fn replace(&mut self, rank: usize, s: &BitString) -> Result<(), WordOpsError> {
        self.check_rank(rank, self.len())?;
        let old = self.string_len(rank);
        let needed = self.used() - old + s.len();
        if needed > CAPACITY {
            return Err(WordOpsError::Overflow { needed });
        }
        let (_, flag) = self.delete(rank)?;
        self.insert(rank, s, flag)
    }

    /// Removes up to `x` bits from the front of string `rank`; returns how many went.
    pub fn splice(&mut self, rank: usize, x: usize) -> Result<usize, WordOpsError> {
        self.check_rank(rank, self.len())?;
        let drop = x.min(self.string_len(rank));
        let at = self.start(rank) + 1;
        remove_range(&mut self.data, at, drop);
        remove_range(&mut self.marks, at, drop);
        self.used -= drop as u16;
        Ok(drop)
    }

    /// Concatenates string `rank + 1` onto string `rank`.
    pub fn concat_adjacent(&mut self, rank: usize) -> Result<(), WordOpsError> {
        self.check_rank(rank + 1, self.len())?;
        let at = self.start(rank + 1);
        remove_range(&mut self.data, at, 1);
        remove_range(&mut self.marks, at, 1);
        self.count -= 1;
        self.used -= 1;
        Ok(())
    }

    /// Removes up to `x` leading bits from every string and reports which
    /// strings still have bits left.
    pub fn drop_prefix_all(&mut self, x: usize) -> IndexSet {
        let mut nonempty = IndexSet::default();
        if x == 0 {
            for i in 0..self.len() {
                if self.string_len(i) > 0 {
                    nonempty.insert(i);
                }
            }
            return nonempty;
        }
        // Walk strings back to front so earlier start positions stay valid.
        let mut end = self.used();
        for i in (0..self.len()).rev() {
            let start = self.start(i);
            let len = end - start - 1;
            let drop = x.min(len);
            remove_range(&mut self.data, start + 1, drop);
            remove_range(&mut self.marks, start + 1, drop);
            self.used -= drop as u16;
            if len > drop {
                nonempty.insert(i);
            }
            end = start;
        }
        nonempty
    }
}

// ---- 256-bit buffer primitives; position 0 is the MSB of word 0 ----

#[inline]
fn get_bit(buf: &Buf, pos: usize) -> bool {
    buf[pos / 64] >> (63 - pos % 64) & 1 == 1
}

fn write_bits(buf: &mut Buf, pos: usize, len: usize, value: u64) {
    if len == 0 {
        return;
    }
    let word = pos / 64;
    let off = pos % 64;
    let value = if len == 64 { value } else { value & ((1 << len) - 1) };
    if off + len <= 64 {
        let shift = 64 - off - len;
        let mask = if len == 64 { u64::MAX } else { ((1u64 << len) - 1) << shift };
        buf[word] = (buf[word] & !mask) | (value << shift);
    } else {
        let hi_len = 64 - off;
        let lo_len = len - hi_len;
        let hi_mask = (1u64 << hi_len) - 1;
        buf[word] = (buf[word] & !hi_mask) | (value >> lo_len);
        let lo_mask = !(u64::MAX >> lo_len);
        buf[word + 1] = (buf[word + 1] & !lo_mask) | (value << (64 - lo_len));
    }
}

/// Mask with every position `>= pos` set.
fn mask_from(pos: usize) -> Buf {
    let mut m = [0u64; WORDS];
    for (w, word) in m.iter_mut().enumerate() {
        let lo = w * 64;
        *word = if pos <= lo {
            u64::MAX
        } else if pos >= lo + 64 {
            0
        } else {
            u64::MAX >> (pos - lo)
        };
    }
    m
}

/// Moves every bit `k` positions toward the end; bits shifted past the end are lost.
fn shift_toward_end(buf: &Buf, k: usize) -> Buf {
    let mut out = [0u64; WORDS];
    if k >= CAPACITY {
        return out;
    }
    let (words, bits) = (k / 64, k % 64);
    for w in (words..WORDS).rev() {
        let src = w - words;
        let mut v = buf[src] >> bits;
        if bits > 0 && src > 0 {
            v |= buf[src - 1] << (64 - bits);
        }
        out[w] = v;
    }
    out
}

/// Moves every bit `k` positions toward the front.
fn shift_toward_front(buf: &Buf, k: usize) -> Buf {
    let mut out = [0u64; WORDS];
    if k >= CAPACITY {
        return out;
    }
    let (words, bits) = (k / 64, k % 64);
    for w in 0..WORDS - words {
        let src = w + words;
        let mut v = buf[src] << bits;
        if bits > 0 && src + 1 < WORDS {
            v |= buf[src + 1] >> (64 - bits);
        }
        out[w] = v;
    }
    out
}

fn insert_gap(buf: &mut Buf, pos: usize, k: usize) {
    if k == 0 {
        return;
    }
    let tail_mask = mask_from(pos);
    let mut tail = *buf;
    for w in 0..WORDS {
        tail[w] &= tail_mask[w];
        buf[w] &= !tail_mask[w];
    }
    let moved = shift_toward_end(&tail, k);
    for w in 0..WORDS {
        buf[w] |= moved[w];
    }
}

fn remove_range(buf: &mut Buf, pos: usize, k: usize) {
    if k == 0 {
        return;
    }
    let head_mask = mask_from(pos);
    let keep_mask = mask_from(pos + k);
    let mut tail = *buf;
    for w in 0..WORDS {
        tail[w] &= keep_mask[w];
        buf[w] &= !head_mask[w];
    }
    let moved = shift_toward_front(&tail, k);
    for w in 0..WORDS {
        buf[w] |= moved[w];
    }
}

/// Position of the `i`-th set bit (0-based), scanning from position 0.
fn select(buf: &Buf, mut i: usize) -> usize {
    for (w, &word) in buf.iter().enumerate() {
        let c = word.count_ones() as usize;
        if i < c {
            let mut v = word;
            for _ in 0..i {
                v &= !(1u64 << (63 - v.leading_zeros()));
            }
            return w * 64 + v.leading_zeros() as usize;
        }
        i -= c;
    }
    panic!("select past the last set bit");
}
