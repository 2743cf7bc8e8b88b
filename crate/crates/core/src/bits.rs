//! Fixed-capacity bit strings, most-significant-bit first.
//!
//! Every fingerprint, hash, and adaptivity string in the crate is a
//! [`BitString`]. Bit `0` is the most significant bit of the first word, so
//! comparing prefixes of two strings is comparing integer prefixes.

use std::fmt;
use std::str::FromStr;

/// Maximum number of bits a [`BitString`] can hold.
pub const MAX_BITS: usize = 256;
const WORDS: usize = MAX_BITS / 64;

/// A bit string of at most [`MAX_BITS`] bits.
///
/// Bits past `len` are always zero, so the derived `Eq`, `Hash`, and `Ord`
/// are content comparisons. The derived order is lexicographic with a prefix
/// sorting before its extensions.
#[derive(Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BitString {
    words: [u64; WORDS],
    len: u16,
}

impl BitString {
    pub const fn new() -> Self {
        BitString {
            words: [0; WORDS],
            len: 0,
        }
    }

    /// Builds a string from the low `nbits` bits of `value`, high bit first.
    pub fn from_value(value: u64, nbits: usize) -> Self {
        let mut s = BitString::new();
        s.push_value(value, nbits);
        s
    }

    pub fn from_bools(bits: &[bool]) -> Self {
        let mut s = BitString::new();
        for &b in bits {
            s.push(b);
        }
        s
    }

    pub(crate) fn from_words(words: [u64; WORDS], len: usize) -> Self {
        let mut s = BitString {
            words,
            len: len as u16,
        };
        s.clear_tail();
        s
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.len as usize
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn get(&self, i: usize) -> bool {
        assert!(i < self.len(), "bit {i} out of range for length {}", self.len);
        (self.words[i / 64] >> (63 - i % 64)) & 1 == 1
    }

    pub fn push(&mut self, bit: bool) {
        let i = self.len();
        assert!(i < MAX_BITS, "bit string overflow");
        if bit {
            self.words[i / 64] |= 1 << (63 - i % 64);
        }
        self.len += 1;
    }

    /// Appends the low `nbits` bits of `value`, high bit first.
    pub fn push_value(&mut self, value: u64, nbits: usize) {
        assert!(nbits <= 64);
        assert!(self.len() + nbits <= MAX_BITS, "bit string overflow");
        if nbits == 0 {
            return;
        }
        let value = if nbits == 64 {
            value
        } else {
            value & ((1u64 << nbits) - 1)
        };
        let start = self.len();
        let word = start / 64;
        let off = start % 64;
        let room = 64 - off;
        if nbits <= room {
            self.words[word] |= value << (room - nbits);
        } else {
            let spill = nbits - room;
            self.words[word] |= value >> spill;
            self.words[word + 1] |= value << (64 - spill);
        }
        self.len += nbits as u16;
    }

    pub fn append(&mut self, other: &BitString) {
        let mut i = 0;
        while i < other.len() {
            let take = (other.len() - i).min(64);
            self.push_value(other.value(i, take), take);
            i += take;
        }
    }

    /// Reads `nbits` (at most 64) bits starting at `start` as an integer.
    #[inline]
    pub fn value(&self, start: usize, nbits: usize) -> u64 {
        assert!(nbits <= 64);
        assert!(
            start + nbits <= self.len(),
            "range {start}+{nbits} exceeds length {}",
            self.len
        );
        read_bits(&self.words, start, nbits)
    }

    /// The substring `[start, start + nbits)`.
    pub fn slice(&self, start: usize, nbits: usize) -> BitString {
        assert!(start + nbits <= self.len());
        let mut out = BitString::new();
        let mut i = 0;
        while i < nbits {
            let take = (nbits - i).min(64);
            out.push_value(self.value(start + i, take), take);
            i += take;
        }
        out
    }

    pub fn prefix(&self, nbits: usize) -> BitString {
        assert!(nbits <= self.len());
        BitString::from_words(self.words, nbits)
    }

    /// The bits from `start` to the end.
    pub fn suffix(&self, start: usize) -> BitString {
        self.slice(start, self.len() - start)
    }

    pub fn truncate(&mut self, nbits: usize) {
        if nbits < self.len() {
            self.len = nbits as u16;
            self.clear_tail();
        }
    }

    /// Length of the longest common prefix.
    pub fn lcp(&self, other: &BitString) -> usize {
        let limit = self.len().min(other.len());
        for w in 0..WORDS {
            let diff = self.words[w] ^ other.words[w];
            if diff != 0 {
                return (w * 64 + diff.leading_zeros() as usize).min(limit);
            }
            if (w + 1) * 64 >= limit {
                break;
            }
        }
        limit
    }

    /// True when `self` is a prefix of `other` (the empty string is a prefix of everything).
    pub fn is_prefix_of(&self, other: &BitString) -> bool {
        self.len() <= other.len() && self.lcp(other) == self.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        (0..self.len()).map(move |i| self.get(i))
    }

    fn clear_tail(&mut self) {
        let len = self.len();
        for w in 0..WORDS {
            let lo = w * 64;
            if lo >= len {
                self.words[w] = 0;
            } else if len < lo + 64 {
                self.words[w] &= !(u64::MAX >> (len - lo));
            }
        }
    }
}

/// Reads `nbits` bits at MSB-first position `start` from a word array.
#[inline]
pub(crate) fn read_bits(words: &[u64], start: usize, nbits: usize) -> u64 {
    if nbits == 0 {
        return 0;
    }
    let word = start / 64;
    let off = start % 64;
    let hi = words[word] << off;
    let combined = if off + nbits > 64 {
        hi | (words[word + 1] >> (64 - off))
    } else {
        hi
    };
    combined >> (64 - nbits)
}

impl fmt::Debug for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "\"{self}\"")
    }
}

impl fmt::Display for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in self.iter() {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid bit string: {0}")]
pub struct ParseBitStringError(String);

impl FromStr for BitString {
    type Err = ParseBitStringError;

    /// Parses strings such as `"0110"`. Spaces and underscores are ignored.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut out = BitString::new();
        for c in s.chars() {
            match c {
                '0' => out.push(false),
                '1' => out.push(true),
                ' ' | '_' => {}
                _ => return Err(ParseBitStringError(s.to_string())),
            }
            if out.len() > MAX_BITS {
                return Err(ParseBitStringError(s.to_string()));
            }
        }
        Ok(out)
    }
}

impl serde::Serialize for BitString {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> serde::Deserialize<'de> for BitString {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
pub(crate) fn bs(s: &str) -> BitString {
    s.parse().unwrap()
}
