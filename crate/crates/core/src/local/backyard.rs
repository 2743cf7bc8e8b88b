use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::bits::BitString;

/// Exact overflow table of full hashes, bucketed by baseline.
///
/// A stored hash matches a query only on full equality, so entries here never
/// cause false positives short of a full-hash tie. The table is provisioned
/// for `capacity` entries and grows past that, up to `limit`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub(crate) struct Backyard {
    capacity: usize,
    limit: usize,
    baseline: usize,
    len: usize,
    buckets: BTreeMap<BitString, Vec<BitString>>,
}

impl Backyard {
    pub fn new(capacity: usize, limit: usize, baseline: usize) -> Self {
        Backyard {
            capacity,
            limit: limit.max(capacity),
            baseline,
            len: 0,
            buckets: BTreeMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    /// Entries the table currently has room for.
    pub fn provisioned(&self) -> usize {
        self.capacity.max(self.len)
    }

    /// Entries sharing the hash's baseline.
    pub fn bucket(&self, hash: &BitString) -> &[BitString] {
        self.buckets
            .get(&hash.prefix(self.baseline))
            .map_or(&[], Vec::as_slice)
    }

    pub fn insert(&mut self, hash: BitString) -> bool {
        if self.len == self.limit {
            return false;
        }
        self.buckets.entry(hash.prefix(self.baseline)).or_default().push(hash);
        self.len += 1;
        true
    }

    pub fn remove(&mut self, hash: &BitString) -> bool {
        let key = hash.prefix(self.baseline);
        let Some(bucket) = self.buckets.get_mut(&key) else {
            return false;
        };
        let Some(i) = bucket.iter().position(|h| h == hash) else {
            return false;
        };
        bucket.remove(i);
        if bucket.is_empty() {
            self.buckets.remove(&key);
        }
        self.len -= 1;
        true
    }

    pub fn iter(&self) -> impl Iterator<Item = &BitString> {
        self.buckets.values().flatten()
    }
}
