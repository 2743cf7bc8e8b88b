use serde::{Deserialize, Serialize};

/// A fixed-length bitvector, bit `i` at `words[i / 64] >> (i % 64)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub(crate) struct BitVec {
    words: Vec<u64>,
    len: usize,
}

impl BitVec {
    pub fn new(len: usize) -> Self {
        BitVec {
            words: vec![0; len.div_ceil(64)],
            len,
        }
    }

    #[inline]
    pub fn get(&self, i: usize) -> bool {
        debug_assert!(i < self.len);
        self.words[i / 64] >> (i % 64) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, i: usize, bit: bool) {
        debug_assert!(i < self.len);
        let m = 1u64 << (i % 64);
        if bit {
            self.words[i / 64] |= m;
        } else {
            self.words[i / 64] &= !m;
        }
    }

    /// Word `w` masked to the bit range `[lo, hi)`.
    #[inline]
    fn masked(&self, w: usize, lo: usize, hi: usize) -> u64 {
        let mut v = self.words[w];
        let base = w * 64;
        if lo > base {
            v &= u64::MAX << (lo - base);
        }
        if hi < base + 64 {
            v &= (1u64 << (hi - base)) - 1;
        }
        v
    }

    /// First set bit in `[lo, hi)`.
    pub fn first_one(&self, lo: usize, hi: usize) -> Option<usize> {
        if lo >= hi {
            return None;
        }
        for w in lo / 64..=(hi - 1) / 64 {
            let v = self.masked(w, lo, hi);
            if v != 0 {
                return Some(w * 64 + v.trailing_zeros() as usize);
            }
        }
        None
    }

    /// Set bits in `[lo, hi)` of `self | other`.
    pub fn count_union(&self, other: &BitVec, lo: usize, hi: usize) -> usize {
        if lo >= hi {
            return 0;
        }
        (lo / 64..=(hi - 1) / 64)
            .map(|w| (self.masked(w, lo, hi) | other.masked(w, lo, hi)).count_ones() as usize)
            .sum()
    }
}

/// Fixed-width unsigned integers packed into words.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub(crate) struct PackedArray {
    width: u32,
    words: Vec<u64>,
}

impl PackedArray {
    pub fn new(len: usize, width: u32) -> Self {
        assert!(width <= 64);
        PackedArray {
            width,
            words: vec![0; (len * width as usize).div_ceil(64) + 1],
        }
    }

    #[inline]
    pub fn get(&self, i: usize) -> u64 {
        if self.width == 0 {
            return 0;
        }
        let bit = i * self.width as usize;
        let (w, off) = (bit / 64, bit % 64);
        let lo = self.words[w] as u128 | (self.words[w + 1] as u128) << 64;
        ((lo >> off) as u64) & mask(self.width)
    }

    #[inline]
    pub fn set(&mut self, i: usize, value: u64) {
        if self.width == 0 {
            return;
        }
        let bit = i * self.width as usize;
        let (w, off) = (bit / 64, bit % 64);
        let m = (mask(self.width) as u128) << off;
        let mut both = self.words[w] as u128 | (self.words[w + 1] as u128) << 64;
        both = (both & !m) | (((value & mask(self.width)) as u128) << off);
        self.words[w] = both as u64;
        self.words[w + 1] = (both >> 64) as u64;
    }
}

#[inline]
fn mask(width: u32) -> u64 {
    if width == 64 {
        u64::MAX
    } else {
        (1u64 << width) - 1
    }
}
