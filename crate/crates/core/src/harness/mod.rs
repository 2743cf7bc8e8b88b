//! The adaptivity game: an oracle that keeps the true set and holds the
//! adversary to the filter's preconditions, a few adversaries, and the
//! transcripts they produce.

mod game;
mod space;
mod transcript;
pub mod verify;

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::amq::{Amq, FilterError};
use crate::baselines::{BloomBaseline, QuotientBaseline, WhitelistBloom};
use crate::filter::BroomFilter;
use crate::hash::{mix64, MixHasher};
use crate::local::{PackedStore, ReferenceStore};
use crate::params::Params;

pub use game::{run_game, Discovery, DISCOVERY_TRIALS_PER_KEY};
pub use space::{measure_full, SpaceCheck};
pub use transcript::{summarize, GameConfig, GameTranscript, RoundRecord, Summary, SummaryRow};

/// Set on every negative query key and never on an insertable one.
pub const NEGATIVE_BIT: u64 = 1 << 63;

#[derive(Debug, thiserror::Error)]
pub enum GameError {
    #[error("unknown filter {0:?} (expected one of: broom, broom-reference, bloom, quotient, whitelist-bloom)")]
    UnknownAmq(String),
    #[error("unknown adversary {0:?} (expected one of: oblivious, repeat-fp, delete-reinsert)")]
    UnknownAdversary(String),
    #[error("oracle precondition violated: {0}")]
    Precondition(String),
    #[error(transparent)]
    Filter(#[from] FilterError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AmqKind {
    Broom,
    /// The broom filter over the unpacked reference store.
    BroomReference,
    Bloom,
    Quotient,
    WhitelistBloom,
}

impl AmqKind {
    pub const ALL: [AmqKind; 5] = [
        AmqKind::Broom,
        AmqKind::BroomReference,
        AmqKind::Bloom,
        AmqKind::Quotient,
        AmqKind::WhitelistBloom,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AmqKind::Broom => "broom",
            AmqKind::BroomReference => "broom-reference",
            AmqKind::Bloom => "bloom",
            AmqKind::Quotient => "quotient",
            AmqKind::WhitelistBloom => "whitelist-bloom",
        }
    }

    /// Builds an empty filter for `n` keys at rate `2^-eps_log2`. The
    /// whitelist filter ignores the rate and runs its Bloom part at `1/n`.
    pub fn build(self, n: u64, eps_log2: u32, seed: u64) -> Result<Box<dyn Amq + Send>, FilterError> {
        let params = Params::from_log2(n, eps_log2)?;
        Ok(match self {
            AmqKind::Broom => Box::new(BroomFilter::<PackedStore, _>::with_params(params, seed, MixHasher)),
            AmqKind::BroomReference => {
                Box::new(BroomFilter::<ReferenceStore, _>::with_params(params, seed, MixHasher))
            }
            AmqKind::Bloom => Box::new(BloomBaseline::from_log2(n, eps_log2, seed)),
            AmqKind::Quotient => Box::new(QuotientBaseline::<PackedStore>::with_params(params, seed)),
            AmqKind::WhitelistBloom => Box::new(WhitelistBloom::new(n, seed)?),
        })
    }
}

impl fmt::Display for AmqKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AmqKind {
    type Err = GameError;

    fn from_str(s: &str) -> Result<Self, GameError> {
        AmqKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| GameError::UnknownAmq(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AdversaryKind {
    /// Fresh negative queries, `n` per round, ignoring the answers.
    Oblivious,
    /// `n` fresh queries, then each round replays the previous round's false positives.
    RepeatFp,
    /// Finds a false positive `x` and a member `y` it collided with, then
    /// loops lookup(x), delete(y), insert(y), one iteration per round.
    DeleteReinsert,
}

impl AdversaryKind {
    pub const ALL: [AdversaryKind; 3] = [
        AdversaryKind::Oblivious,
        AdversaryKind::RepeatFp,
        AdversaryKind::DeleteReinsert,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AdversaryKind::Oblivious => "oblivious",
            AdversaryKind::RepeatFp => "repeat-fp",
            AdversaryKind::DeleteReinsert => "delete-reinsert",
        }
    }
}

impl fmt::Display for AdversaryKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AdversaryKind {
    type Err = GameError;

    fn from_str(s: &str) -> Result<Self, GameError> {
        AdversaryKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| GameError::UnknownAdversary(s.to_string()))
    }
}

/// Key source for one game. Members come from a seeded generator with the
/// top bit clear; negatives are a seeded bijective sequence with it set, so
/// they never repeat and never collide with a member.
#[derive(Debug, Clone)]
pub struct KeyStream {
    rng: ChaCha8Rng,
    neg_base: u64,
    neg_next: u64,
}

impl KeyStream {
    pub fn new(seed: u64) -> Self {
        KeyStream {
            rng: ChaCha8Rng::seed_from_u64(seed),
            neg_base: mix64(seed ^ 0x6e65_6761_7469_7665),
            neg_next: 0,
        }
    }

    pub fn member(&mut self) -> u64 {
        self.rng.gen::<u64>() & !NEGATIVE_BIT
    }

    pub fn negative(&mut self) -> u64 {
        let i = self.neg_base.wrapping_add(self.neg_next);
        self.neg_next += 1;
        NEGATIVE_BIT | (i.wrapping_mul(0x9e37_79b9_7f4a_7c15) & !NEGATIVE_BIT)
    }

    pub fn below(&mut self, bound: usize) -> usize {
        self.rng.gen_range(0..bound)
    }
}

/// Wraps a filter with the true set and rejects any call the filter is not
/// required to handle.
pub struct Oracle {
    amq: Box<dyn Amq + Send>,
    members: Vec<u64>,
    index: HashMap<u64, usize>,
}

impl Oracle {
    pub fn new(amq: Box<dyn Amq + Send>) -> Self {
        Oracle {
            amq,
            members: Vec::new(),
            index: HashMap::new(),
        }
    }

    pub fn amq(&self) -> &(dyn Amq + Send) {
        self.amq.as_ref()
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.members.len() as u64 >= self.amq.capacity()
    }

    pub fn contains(&self, x: u64) -> bool {
        self.index.contains_key(&x)
    }

    /// The `i`-th member in insertion order, with deletions swapped in from the end.
    pub fn member(&self, i: usize) -> u64 {
        self.members[i]
    }

    pub fn insert(&mut self, x: u64) -> Result<(), GameError> {
        if self.is_full() {
            return Err(GameError::Precondition(format!("insert of {x} into a full filter")));
        }
        if self.contains(x) {
            return Err(GameError::Precondition(format!("{x} is already a member")));
        }
        self.amq.insert(x)?;
        self.index.insert(x, self.members.len());
        self.members.push(x);
        Ok(())
    }

    pub fn delete(&mut self, x: u64) -> Result<(), GameError> {
        let Some(i) = self.index.remove(&x) else {
            return Err(GameError::Precondition(format!("delete of non-member {x}")));
        };
        self.amq.delete(x)?;
        self.members.swap_remove(i);
        if let Some(&moved) = self.members.get(i) {
            self.index.insert(moved, i);
        }
        Ok(())
    }

    /// Looks `x` up; the filter adapts exactly when the answer is a false positive.
    pub fn lookup(&mut self, x: u64) -> Result<bool, GameError> {
        let member = self.contains(x);
        let present = self.amq.checked_lookup(x, member)?;
        if member && !present {
            return Err(GameError::Filter(FilterError::Corrupt(format!("false negative on {x}"))));
        }
        Ok(present)
    }
}
