//! The interface shared by the broom filter and the baselines.

use crate::local::{SpaceReport, StoreError};
use crate::params::ParamError;
use crate::remote::{AccessCounters, RemoteError};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FilterError {
    #[error(transparent)]
    Params(#[from] ParamError),
    #[error("filter is at capacity ({0} elements)")]
    Capacity(u64),
    #[error("key {0} is already in the set")]
    Duplicate(u64),
    #[error("key {0} is not in the set")]
    Absent(u64),
    #[error("key {0} is not a false positive")]
    NotFalsePositive(u64),
    #[error("{0} is not supported by this filter")]
    Unsupported(&'static str),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Remote(#[from] RemoteError),
    #[error("internal inconsistency: {0}")]
    Corrupt(String),
}

/// An approximate membership structure driven by an oracle that knows the true set.
pub trait Amq {
    fn name(&self) -> &'static str;

    /// Maximum number of live elements.
    fn capacity(&self) -> u64;

    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Local membership test. Never false for a member.
    fn lookup(&self, x: u64) -> bool;

    fn insert(&mut self, x: u64) -> Result<(), FilterError>;

    fn delete(&mut self, x: u64) -> Result<(), FilterError>;

    /// Told that `x` was just reported present but is not a member.
    fn adapt(&mut self, x: u64) -> Result<(), FilterError>;

    /// Lookup as seen through the oracle: the caller says whether `x` is a
    /// member, and a false positive is adapted to before returning.
    fn checked_lookup(&mut self, x: u64, member: bool) -> Result<bool, FilterError> {
        let present = self.lookup(x);
        if present && !member {
            self.adapt(x)?;
        }
        Ok(present)
    }

    fn supports_delete(&self) -> bool {
        true
    }

    fn counters(&self) -> AccessCounters {
        AccessCounters::default()
    }

    /// Local space in bits.
    fn space_bits(&self) -> u64;

    /// Adaptivity bits held locally, where the notion applies.
    fn adaptivity_bits(&self) -> u64 {
        0
    }

    /// Breakdown of local space, for filters built on the fingerprint store.
    fn space_report(&self) -> Option<SpaceReport> {
        None
    }

    /// Times a query collided again with a member it was already fixed
    /// against, under the same hash functions.
    fn repeated_collisions(&self) -> u64 {
        0
    }

    /// The member that `x` most recently collided with, if the filter keeps
    /// that record.
    fn collision_owner(&self, _x: u64) -> Option<u64> {
        None
    }
}
