//! Self-check suites, runnable from the command line.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::transcript::GameConfig;
use super::{run_game, AdversaryKind, AmqKind, NEGATIVE_BIT};
use crate::amq::{Amq, FilterError};
use crate::bits::BitString;
use crate::filter::BroomFilter;
use crate::hash::{mix64, MixHasher};
use crate::local::{FingerprintStore, PackedStore, ReferenceStore};
use crate::params::Params;
use crate::wordops::{PackedStrings, CAPACITY};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Op {
    Insert(u64),
    Delete(u64),
    LookupMember(u64),
    LookupOther(u64),
}

/// A random stream of valid operations over a small key pool, so deleted
/// keys come back and negative queries repeat.
#[derive(Debug, Clone)]
pub struct Workload {
    rng: ChaCha8Rng,
    seed: u64,
    n: u64,
    members: Vec<u64>,
    index: HashMap<u64, usize>,
}

impl Workload {
    pub fn new(n: u64, seed: u64) -> Self {
        Workload {
            rng: ChaCha8Rng::seed_from_u64(seed ^ 0x776f_726b),
            seed,
            n,
            members: Vec::new(),
            index: HashMap::new(),
        }
    }

    pub fn members(&self) -> &[u64] {
        &self.members
    }

    fn pool_key(&self, i: u64) -> u64 {
        mix64(self.seed.wrapping_add(i)) & !NEGATIVE_BIT
    }

    pub fn next_op(&mut self) -> Op {
        let full = self.members.len() as u64 >= self.n;
        let roll: f64 = self.rng.gen();
        if self.members.is_empty() || (roll < 0.25 && !full) {
            loop {
                let i = self.rng.gen_range(0..2 * self.n);
                let k = self.pool_key(i);
                if !self.index.contains_key(&k) {
                    return Op::Insert(k);
                }
            }
        }
        let pick = self.members[self.rng.gen_range(0..self.members.len())];
        if roll < 0.4 {
            Op::Delete(pick)
        } else if roll < 0.6 {
            Op::LookupMember(pick)
        } else {
            let j = self.rng.gen_range(0..4 * self.n);
            Op::LookupOther(NEGATIVE_BIT | mix64(self.seed ^ (j << 20) ^ 0x5a5a))
        }
    }

    /// Applies `op` and updates the member list. Lookups return their answer.
    pub fn apply<A: Amq + ?Sized>(&mut self, amq: &mut A, op: Op) -> Result<Option<bool>, FilterError> {
        match op {
            Op::Insert(k) => {
                amq.insert(k)?;
                self.index.insert(k, self.members.len());
                self.members.push(k);
                Ok(None)
            }
            Op::Delete(k) => {
                amq.delete(k)?;
                let i = self.index.remove(&k).expect("deleted key is a member");
                self.members.swap_remove(i);
                if let Some(&moved) = self.members.get(i) {
                    self.index.insert(moved, i);
                }
                Ok(None)
            }
            Op::LookupMember(k) => amq.checked_lookup(k, true).map(Some),
            Op::LookupOther(k) => amq.checked_lookup(k, false).map(Some),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    PrefixFree,
    NoFalseNegatives,
    NoRepeatCollisions,
    Equivalence,
    Wordops,
}

impl Suite {
    pub const ALL: [Suite; 5] = [
        Suite::PrefixFree,
        Suite::NoFalseNegatives,
        Suite::NoRepeatCollisions,
        Suite::Equivalence,
        Suite::Wordops,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::PrefixFree => "prefix-free",
            Suite::NoFalseNegatives => "no-false-negatives",
            Suite::NoRepeatCollisions => "no-repeat-collisions",
            Suite::Equivalence => "equivalence",
            Suite::Wordops => "wordops",
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Suite::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| format!("unknown suite {s:?}"))
    }
}

/// A deliberate defect, for checking that the suites notice one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Fault {
    /// Every 64th insert is acknowledged but not stored.
    DropInserts,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyConfig {
    pub n: u64,
    pub eps_log2: u32,
    pub seed: u64,
    pub ops: u64,
    pub fault: Option<Fault>,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            n: 256,
            eps_log2: 6,
            seed: 1,
            ops: 20_000,
            fault: None,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SuiteResult {
    pub suite: Suite,
    pub passed: bool,
    /// Individual checks performed.
    pub checks: u64,
    pub detail: String,
}

pub fn run_suite(suite: Suite, cfg: &VerifyConfig) -> SuiteResult {
    let outcome = match suite {
        Suite::PrefixFree => prefix_free(cfg),
        Suite::NoFalseNegatives => no_false_negatives(cfg),
        Suite::NoRepeatCollisions => no_repeat_collisions(cfg),
        Suite::Equivalence => equivalence(cfg),
        Suite::Wordops => wordops(cfg),
    };
    let (passed, checks, detail) = match outcome {
        Ok((checks, detail)) => (true, checks, detail),
        Err((checks, detail)) => (false, checks, detail),
    };
    SuiteResult {
        suite,
        passed,
        checks,
        detail,
    }
}

type Outcome = Result<(u64, String), (u64, String)>;

fn filter<S: FingerprintStore>(cfg: &VerifyConfig) -> Result<BroomFilter<S>, (u64, String)> {
    let params = Params::from_log2(cfg.n, cfg.eps_log2).map_err(|e| (0, e.to_string()))?;
    Ok(BroomFilter::with_params(params, cfg.seed, MixHasher))
}

fn prefix_free(cfg: &VerifyConfig) -> Outcome {
    let mut f = filter::<ReferenceStore>(cfg)?;
    let mut w = Workload::new(cfg.n, cfg.seed);
    for i in 0..cfg.ops {
        let op = w.next_op();
        w.apply(&mut f, op).map_err(|e| (i, format!("op {i} {op:?}: {e}")))?;
        f.check_invariants().map_err(|v| (i, format!("after op {i} {op:?}: {v:?}")))?;
    }
    Ok((cfg.ops, format!("{} ops, {} tie fallbacks", cfg.ops, f.fixes().ties())))
}

/// Forwards to the wrapped filter but silently loses some inserts.
struct Faulty<A> {
    inner: A,
    inserts: u64,
}

impl<A: Amq> Amq for Faulty<A> {
    fn name(&self) -> &'static str {
        self.inner.name()
    }
    fn capacity(&self) -> u64 {
        self.inner.capacity()
    }
    fn len(&self) -> usize {
        self.inner.len()
    }
    fn lookup(&self, x: u64) -> bool {
        self.inner.lookup(x)
    }
    fn insert(&mut self, x: u64) -> Result<(), FilterError> {
        self.inserts += 1;
        if self.inserts % 64 == 0 {
            return Ok(());
        }
        self.inner.insert(x)
    }
    fn delete(&mut self, x: u64) -> Result<(), FilterError> {
        match self.inner.delete(x) {
            Err(FilterError::Absent(_)) => Ok(()),
            r => r,
        }
    }
    fn adapt(&mut self, x: u64) -> Result<(), FilterError> {
        self.inner.adapt(x)
    }
    fn space_bits(&self) -> u64 {
        self.inner.space_bits()
    }
}

fn no_false_negatives(cfg: &VerifyConfig) -> Outcome {
    let f = filter::<PackedStore>(cfg)?;
    let mut amq: Box<dyn Amq> = match cfg.fault {
        None => Box::new(f),
        Some(Fault::DropInserts) => Box::new(Faulty { inner: f, inserts: 0 }),
    };
    let mut w = Workload::new(cfg.n, cfg.seed);
    let mut checks = 0;
    for i in 0..cfg.ops {
        let op = w.next_op();
        let got = w.apply(amq.as_mut(), op).map_err(|e| (checks, format!("op {i} {op:?}: {e}")))?;
        if let (Op::LookupMember(k), Some(present)) = (op, got) {
            checks += 1;
            if !present {
                return Err((checks, format!("member {k} reported absent at op {i}")));
            }
        }
    }
    for &k in w.members() {
        checks += 1;
        if !amq.lookup(k) {
            return Err((checks, format!("member {k} reported absent in the final sweep")));
        }
    }
    Ok((checks, format!("{} ops, {checks} member lookups", cfg.ops)))
}

fn no_repeat_collisions(cfg: &VerifyConfig) -> Outcome {
    let mut f = filter::<PackedStore>(cfg)?;
    let mut w = Workload::new(cfg.n, cfg.seed);
    for i in 0..cfg.ops {
        let op = w.next_op();
        w.apply(&mut f, op).map_err(|e| (i, format!("op {i} {op:?}: {e}")))?;
    }
    if let Some(r) = f.fixes().repeats().first() {
        return Err((f.fixes().total(), format!("mixed workload repeated {r:?}")));
    }
    let game = GameConfig {
        amq: AmqKind::Broom,
        adversary: AdversaryKind::DeleteReinsert,
        n: cfg.n,
        eps_log2: cfg.eps_log2,
        seed: cfg.seed,
        rounds: 1000,
    };
    let t = run_game(&game).map_err(|e| (0, e.to_string()))?;
    let repeats = t.rounds.last().map_or(0, |r| r.repeated_collisions);
    if repeats > 0 {
        return Err((t.rounds.len() as u64, format!("delete/reinsert loop repeated {repeats} collisions")));
    }
    Ok((
        f.fixes().total() + t.rounds.len() as u64,
        format!("{} fixes in the mixed workload, {} attack iterations", f.fixes().total(), t.rounds.len()),
    ))
}

/// Runs the same workload on both stores and returns the lookup answers.
fn answers<S: FingerprintStore>(cfg: &VerifyConfig) -> Result<(Vec<bool>, BroomFilter<S>), (u64, String)> {
    let mut f = filter::<S>(cfg)?;
    let mut w = Workload::new(cfg.n, cfg.seed);
    let mut out = Vec::new();
    for i in 0..cfg.ops {
        let op = w.next_op();
        if let Some(b) = w.apply(&mut f, op).map_err(|e| (i, format!("op {i} {op:?}: {e}")))? {
            out.push(b);
        }
    }
    Ok((out, f))
}

fn equivalence(cfg: &VerifyConfig) -> Outcome {
    let (a, fa) = answers::<PackedStore>(cfg)?;
    let (b, fb) = answers::<ReferenceStore>(cfg)?;
    if let Some(i) = a.iter().zip(&b).position(|(x, y)| x != y) {
        return Err((i as u64, format!("lookup {i} differs")));
    }
    let mut pa = fa.local().fingerprints();
    let mut pb = fb.local().fingerprints();
    pa.sort();
    pb.sort();
    if pa != pb || fa.counters() != fb.counters() || fa.phase() != fb.phase() {
        return Err((a.len() as u64, "final states differ".into()));
    }
    Ok((a.len() as u64, format!("{} lookups agree, final states equal", a.len())))
}

/// Wordops against a list of plain boolean vectors.
fn wordops(cfg: &VerifyConfig) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let bits = |rng: &mut ChaCha8Rng, max: usize| -> Vec<bool> {
        let len = rng.gen_range(0..=max);
        (0..len).map(|_| rng.gen()).collect()
    };
    let to_bits = |v: &[bool]| BitString::from_bools(v);
    let used = |m: &[Vec<bool>]| m.iter().map(|s| s.len() + 1).sum::<usize>();
    for case in 0..cfg.ops {
        let mut model: Vec<Vec<bool>> = Vec::new();
        let mut p = PackedStrings::new();
        for _ in 0..rng.gen_range(0..30) {
            let s = bits(&mut rng, 12);
            if used(&model) + 1 + s.len() <= CAPACITY {
                p.insert(model.len(), &to_bits(&s), false).map_err(|e| (case, e.to_string()))?;
                model.push(s);
            }
        }
        let q = match model.len() {
            0 => bits(&mut rng, 16),
            len => {
                let mut q = model[rng.gen_range(0..len)].clone();
                q.extend(bits(&mut rng, 6));
                q
            }
        };
        let expect: Vec<usize> = (0..model.len()).filter(|&i| q.starts_with(&model[i])).collect();
        let got: Vec<usize> = p.prefix_match(&to_bits(&q), 0..model.len()).map_err(|e| (case, e.to_string()))?.iter().collect();
        let lcps: Vec<usize> = model.iter().map(|s| s.iter().zip(&q).take_while(|(a, b)| a == b).count()).collect();
        let got_lcps = p.prefix_lengths(&to_bits(&q), 0..model.len()).map_err(|e| (case, e.to_string()))?;
        if got != expect || got_lcps != lcps {
            return Err((case, format!("query mismatch on case {case}")));
        }
        let x = rng.gen_range(0..6);
        match rng.gen_range(0..4) {
            0 if !model.is_empty() => {
                let r = rng.gen_range(0..model.len());
                p.delete(r).map_err(|e| (case, e.to_string()))?;
                model.remove(r);
            }
            1 if !model.is_empty() => {
                let r = rng.gen_range(0..model.len());
                p.splice(r, x).map_err(|e| (case, e.to_string()))?;
                let d = x.min(model[r].len());
                model[r].drain(..d);
            }
            2 if model.len() > 1 => {
                let r = rng.gen_range(0..model.len() - 1);
                p.concat_adjacent(r).map_err(|e| (case, e.to_string()))?;
                let next = model.remove(r + 1);
                model[r].extend(next);
            }
            _ => {
                p.drop_prefix_all(x);
                for s in &mut model {
                    let d = x.min(s.len());
                    s.drain(..d);
                }
            }
        }
        let back: Vec<Vec<bool>> = p.iter().map(|s| s.iter().collect()).collect();
        if back != model || p.used() != used(&model) {
            return Err((case, format!("contents differ after edit on case {case}")));
        }
    }
    Ok((cfg.ops, format!("{} randomized cases", cfg.ops)))
}
