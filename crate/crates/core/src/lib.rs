//! An adaptive approximate-membership filter that fixes its false positives.

pub mod amq;
pub mod baselines;
pub mod bits;
pub mod filter;
pub mod harness;
pub mod hash;
pub mod local;
pub mod params;
pub mod remote;
pub mod wordops;

pub use amq::{Amq, FilterError};
pub use baselines::{BloomBaseline, QuotientBaseline, WhitelistBloom};
pub use bits::BitString;
pub use filter::{BroomFilter, FixRecord, InvariantReport, InvariantViolation, SnapshotError};
pub use hash::{Generation, HashBits, KeyHasher, MixHasher, PhaseState, Stream};
pub use local::{FingerprintStore, PackedStore, ReferenceStore};
pub use params::{ParamError, Params, Regime};
pub use remote::{AccessCounters, OpClass, RemoteState, Tally};
