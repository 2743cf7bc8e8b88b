//! Derived sizing parameters.
//!
//! Capacity `n` and the false-positive rate `epsilon` are restricted to
//! powers of two so that the quotient width `q = log2 n` and remainder width
//! `r = log2(1/epsilon)` are exact integers.

use serde::{Deserialize, Serialize};

/// Smallest supported capacity.
pub const MIN_CAPACITY: u64 = 16;
/// Largest supported capacity.
pub const MAX_CAPACITY: u64 = 1 << 30;
/// Default hash-range exponent: hashes are `4 * q` bits long.
pub const DEFAULT_HASH_EXPONENT: u32 = 4;
/// Bits of room a hash must leave past the baseline fingerprint.
pub const ADAPTIVITY_HEADROOM: u32 = 16;
/// Elements rehashed per call to Extend.
pub const DEFAULT_RECLAIM_BATCH: usize = 3;
const MIN_ALPHA: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ParamError {
    #[error("capacity {0} is not a power of two in [{MIN_CAPACITY}, {MAX_CAPACITY}]")]
    Capacity(u64),
    #[error("false-positive rate {0} is not 2^-r for an integer r >= 1")]
    Epsilon(f64),
    #[error("remainder width {0} is out of range")]
    RemainderWidth(u32),
    #[error("hash of {0} bits does not fit in a fingerprint buffer")]
    HashTooLong(usize),
}

/// Which storage layout the filter uses, decided by `r` against `2 log2 log2 n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Regime {
    /// Remainders fit many to a word: primary quotient filter plus a small
    /// secondary quotient filter under an independent hash.
    SmallRemainder,
    /// Remainders are split into a short signature and the rest; signature
    /// clashes and overflow go to an exact backyard table.
    LargeRemainder,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Params {
    /// Capacity, a power of two.
    pub n: u64,
    /// Quotient width, `log2 n`.
    pub q: u32,
    /// Remainder width, `log2(1/epsilon)`.
    pub r: u32,
    /// Hash-range exponent; hashes are `c_hash * q` bits.
    pub c_hash: u32,
    /// Total hash length in bits.
    pub hash_bits: usize,
    /// Slot slack fraction of the primary level.
    pub alpha: f64,
    /// Maximum displacement, in slots, of a primary-level entry.
    pub probe_cap: usize,
    pub regime: Regime,
    /// Elements rehashed per Extend.
    pub reclaim_batch: usize,
    /// Width of the signature part of a primary remainder (`r` in the small regime).
    pub signature_bits: u32,
    /// Primary slots addressed by quotients (the probe-cap tail comes on top).
    pub primary_slots: usize,
    /// Quotient width of the secondary level (small regime).
    pub secondary_q: u32,
    /// Remainder width of the secondary level (small regime).
    pub secondary_r: u32,
    /// Entries the backyard is provisioned for (large regime).
    pub backyard_capacity: usize,
    /// Entries past which the backyard refuses inserts.
    pub backyard_limit: usize,
}

impl Params {
    /// Derives parameters from a capacity and a false-positive rate.
    pub fn new(n: u64, epsilon: f64) -> Result<Self, ParamError> {
        let r = epsilon_log2(epsilon)?;
        Self::from_log2(n, r)
    }

    /// Derives parameters from a capacity and `r`, where `epsilon = 2^-r`.
    pub fn from_log2(n: u64, r: u32) -> Result<Self, ParamError> {
        Self::with_hash_exponent(n, r, DEFAULT_HASH_EXPONENT)
    }

    /// Like [`Params::from_log2`] with an explicit starting hash exponent.
    /// The exponent is raised until the hash has room for adaptivity bits.
    pub fn with_hash_exponent(n: u64, r: u32, c_hash: u32) -> Result<Self, ParamError> {
        if !n.is_power_of_two() || !(MIN_CAPACITY..=MAX_CAPACITY).contains(&n) {
            return Err(ParamError::Capacity(n));
        }
        if r == 0 || r > 48 {
            return Err(ParamError::RemainderWidth(r));
        }
        let q = n.trailing_zeros();
        let qf = q as f64;
        let loglog = qf.log2();
        let regime = if (r as f64) <= 2.0 * loglog {
            Regime::SmallRemainder
        } else {
            Regime::LargeRemainder
        };

        let mut c_hash = c_hash.max(1);
        while c_hash * q < q + r + ADAPTIVITY_HEADROOM {
            c_hash += 1;
        }
        let hash_bits = (c_hash * q) as usize;
        // Ghost match queries prepend a group offset to the post-baseline bits.
        if hash_bits + 8 > crate::bits::MAX_BITS {
            return Err(ParamError::HashTooLong(hash_bits));
        }

        let (alpha, probe_cap, signature_bits) = match regime {
            Regime::SmallRemainder => {
                let alpha = (9.0 * r as f64 * loglog / qf).sqrt().max(MIN_ALPHA);
                let cap = (qf / r as f64).ceil() as usize;
                (alpha, cap, r)
            }
            Regime::LargeRemainder => {
                let alpha = (18.0 * loglog * loglog / qf).sqrt().max(MIN_ALPHA);
                let cap = (qf / (2.0 * loglog)).ceil() as usize;
                let sig = (2 * loglog.ceil() as u32).min(r);
                (alpha, cap, sig)
            }
        };
        let primary_slots = ((1.0 + alpha) * n as f64).ceil() as usize;

        let secondary_q = ((qf - loglog).round() as u32).clamp(1, q);
        let secondary_r = q + r - secondary_q;
        let backyard_capacity = (n as usize).div_ceil(2 * q as usize);
        let backyard_limit = (n as usize / 4).max(8).max(backyard_capacity);

        Ok(Params {
            n,
            q,
            r,
            c_hash,
            hash_bits,
            alpha,
            probe_cap: probe_cap.max(1),
            regime,
            reclaim_batch: DEFAULT_RECLAIM_BATCH,
            signature_bits,
            primary_slots,
            secondary_q,
            secondary_r,
            backyard_capacity,
            backyard_limit,
        })
    }

    pub fn epsilon(&self) -> f64 {
        (-(self.r as f64)).exp2()
    }

    /// Length of a baseline fingerprint, `q + r`.
    pub fn baseline_bits(&self) -> usize {
        (self.q + self.r) as usize
    }

    /// `log2 log2 n`.
    pub fn log_log_n(&self) -> f64 {
        (self.q as f64).log2()
    }
}

/// Returns `r` such that `epsilon == 2^-r`, rejecting anything else.
pub fn epsilon_log2(epsilon: f64) -> Result<u32, ParamError> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(ParamError::Epsilon(epsilon));
    }
    let r = -epsilon.log2();
    if r.fract() != 0.0 || r > 48.0 {
        return Err(ParamError::Epsilon(epsilon));
    }
    let r = r as u32;
    if (-(r as f64)).exp2() != epsilon {
        return Err(ParamError::Epsilon(epsilon));
    }
    Ok(r)
}
