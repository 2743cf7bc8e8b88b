//! Helpers shared by the integration test targets.
#![allow(dead_code)]

use broom::bits::BitString;
use broom::wordops::{PackedStrings, CAPACITY};
use rand::Rng;

/// Strings and flags as plain vectors, with the buffer's space rule.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Naive {
    pub strings: Vec<(Vec<bool>, bool)>,
}

pub fn to_bits(v: &[bool]) -> BitString {
    BitString::from_bools(v)
}

pub fn to_vec(b: &BitString) -> Vec<bool> {
    b.iter().collect()
}

fn lcp(a: &[bool], b: &[bool]) -> usize {
    a.iter().zip(b).take_while(|(x, y)| x == y).count()
}

impl Naive {
    pub fn used(&self) -> usize {
        self.strings.iter().map(|(s, _)| 1 + s.len()).sum()
    }

    pub fn prefix_match(&self, q: &[bool], start: usize, end: usize) -> Option<Vec<usize>> {
        (start <= end && end <= self.strings.len()).then(|| {
            (start..end)
                .filter(|&i| {
                    let s = &self.strings[i].0;
                    s.len() <= q.len() && &q[..s.len()] == s.as_slice()
                })
                .collect()
        })
    }

    pub fn prefix_lengths(&self, q: &[bool], start: usize, end: usize) -> Option<Vec<usize>> {
        (start <= end && end <= self.strings.len())
            .then(|| (start..end).map(|i| lcp(&self.strings[i].0, q)).collect())
    }

    pub fn insert(&mut self, rank: usize, s: &[bool], flag: bool) -> bool {
        if rank > self.strings.len() || self.used() + 1 + s.len() > CAPACITY {
            return false;
        }
        self.strings.insert(rank, (s.to_vec(), flag));
        true
    }

    pub fn delete(&mut self, rank: usize) -> Option<(Vec<bool>, bool)> {
        (rank < self.strings.len()).then(|| self.strings.remove(rank))
    }

    pub fn replace(&mut self, rank: usize, s: &[bool]) -> bool {
        if rank >= self.strings.len() || self.used() - self.strings[rank].0.len() + s.len() > CAPACITY {
            return false;
        }
        self.strings[rank].0 = s.to_vec();
        true
    }

    pub fn splice(&mut self, rank: usize, x: usize) -> Option<usize> {
        let s = &mut self.strings.get_mut(rank)?.0;
        let d = x.min(s.len());
        s.drain(..d);
        Some(d)
    }

    pub fn concat_adjacent(&mut self, rank: usize) -> bool {
        if rank + 1 >= self.strings.len() {
            return false;
        }
        let (next, _) = self.strings.remove(rank + 1);
        self.strings[rank].0.extend(next);
        true
    }

    pub fn drop_prefix_all(&mut self, x: usize) -> Vec<usize> {
        let mut out = Vec::new();
        for (i, (s, _)) in self.strings.iter_mut().enumerate() {
            let d = x.min(s.len());
            s.drain(..d);
            if !s.is_empty() {
                out.push(i);
            }
        }
        out
    }
}

/// Reads a packed buffer back into the naive form.
pub fn unpack(p: &PackedStrings) -> Naive {
    Naive {
        strings: (0..p.len()).map(|i| (to_vec(&p.get(i)), p.flag(i))).collect(),
    }
}

/// Builds matching packed and naive buffers from `strings`, keeping those that fit.
pub fn pack(strings: &[(Vec<bool>, bool)]) -> (PackedStrings, Naive) {
    let mut p = PackedStrings::new();
    let mut n = Naive::default();
    for (s, f) in strings {
        if n.insert(n.strings.len(), s, *f) {
            p.insert(p.len(), &to_bits(s), *f).expect("fits by the naive rule");
        }
    }
    (p, n)
}

pub fn random_bits(rng: &mut impl Rng, max: usize) -> Vec<bool> {
    let len = rng.gen_range(0..=max);
    (0..len).map(|_| rng.gen()).collect()
}

/// A buffer of random strings, biased toward shared prefixes so matches occur.
pub fn random_buffer(rng: &mut impl Rng) -> (PackedStrings, Naive) {
    let stem = random_bits(rng, 8);
    let count = rng.gen_range(0..40);
    let strings: Vec<_> = (0..count)
        .map(|_| {
            let mut s = if rng.gen_bool(0.5) { stem[..rng.gen_range(0..=stem.len())].to_vec() } else { Vec::new() };
            s.extend(random_bits(rng, 14));
            (s, rng.gen())
        })
        .collect();
    pack(&strings)
}

/// A query string, often an extension or truncation of a stored one.
pub fn random_query(rng: &mut impl Rng, n: &Naive) -> Vec<bool> {
    if !n.strings.is_empty() && rng.gen_bool(0.7) {
        let mut q = n.strings[rng.gen_range(0..n.strings.len())].0.clone();
        if rng.gen_bool(0.3) {
            q.truncate(rng.gen_range(0..=q.len()));
        }
        q.extend(random_bits(rng, 10));
        q
    } else {
        random_bits(rng, 24)
    }
}

/// Wordops operations checked against the naive model.
pub const WORDOPS: [&str; 8] = [
    "prefix_match",
    "prefix_lengths",
    "insert",
    "delete",
    "replace",
    "splice",
    "concat_adjacent",
    "drop_prefix_all",
];

/// Runs one randomized case of `op`; returns a description of the first mismatch.
pub fn wordops_case(op: &str, rng: &mut impl Rng) -> Result<(), String> {
    let (mut p, mut n) = random_buffer(rng);
    let count = n.strings.len();
    let initial = n.strings.clone();
    let fail = |what: &str| Err(format!("{op}: {what}, starting from {initial:?}"));
    match op {
        "prefix_match" | "prefix_lengths" => {
            let q = random_query(rng, &n);
            let start = rng.gen_range(0..=count + 1);
            let end = rng.gen_range(0..=count + 1);
            if op == "prefix_match" {
                let got = p.prefix_match(&to_bits(&q), start..end).ok().map(|s| s.iter().collect::<Vec<_>>());
                if got != n.prefix_match(&q, start, end) {
                    return fail("match sets differ");
                }
            } else if p.prefix_lengths(&to_bits(&q), start..end).ok() != n.prefix_lengths(&q, start, end) {
                return fail("lengths differ");
            }
            return Ok(());
        }
        "insert" => {
            let rank = rng.gen_range(0..=count + 1);
            let s = random_bits(rng, 40);
            let flag = rng.gen();
            let before = p;
            let ok = p.insert(rank, &to_bits(&s), flag).is_ok();
            if ok != n.insert(rank, &s, flag) || (!ok && p != before) {
                return fail("insert outcome differs");
            }
        }
        "delete" => {
            let rank = rng.gen_range(0..=count);
            let got = p.delete(rank).ok().map(|(s, f)| (to_vec(&s), f));
            if got != n.delete(rank) {
                return fail("deleted string differs");
            }
        }
        "replace" => {
            let rank = rng.gen_range(0..=count);
            let s = random_bits(rng, 40);
            let before = p;
            let ok = p.replace(rank, &to_bits(&s)).is_ok();
            if ok != n.replace(rank, &s) || (!ok && p != before) {
                return fail("replace outcome differs");
            }
        }
        "splice" => {
            let rank = rng.gen_range(0..=count);
            let x = rng.gen_range(0..20);
            if p.splice(rank, x).ok() != n.splice(rank, x) {
                return fail("splice count differs");
            }
        }
        "concat_adjacent" => {
            let rank = rng.gen_range(0..=count);
            if p.concat_adjacent(rank).is_ok() != n.concat_adjacent(rank) {
                return fail("concat outcome differs");
            }
        }
        "drop_prefix_all" => {
            let x = rng.gen_range(0..20);
            if p.drop_prefix_all(x).iter().collect::<Vec<_>>() != n.drop_prefix_all(x) {
                return fail("nonempty sets differ");
            }
        }
        other => return Err(format!("unknown op {other}")),
    }
    if unpack(&p) != n || p.used() != n.used() {
        return fail("contents differ after the edit");
    }
    Ok(())
}
