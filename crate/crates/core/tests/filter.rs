use std::collections::BTreeSet;

use broom::hash::AliasHasher;
use broom::local::Level;
use broom::{
    Amq, BroomFilter, FilterError, FingerprintStore, KeyHasher, MixHasher, PackedStore, Params, QuotientBaseline,
    ReferenceStore, SnapshotError,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const NEG: u64 = 1 << 48;

fn filter(n: u64, r: u32, seed: u64) -> BroomFilter {
    BroomFilter::with_params(Params::from_log2(n, r).unwrap(), seed, MixHasher)
}

/// The first negative key at or after `from` that the filter reports present.
fn false_positive<S: FingerprintStore, H: KeyHasher>(f: &BroomFilter<S, H>, from: u64) -> u64 {
    (from..).find(|&x| f.lookup(x)).unwrap()
}

#[test]
fn empty_filter_reports_absent() {
    let f = BroomFilter::new(1 << 10, 1.0 / 16.0, 7).unwrap();
    assert!((0..10_000).all(|x| !f.lookup(x)));
    assert!(f.is_empty());
}

#[test]
fn same_seed_same_state() {
    let mut a = filter(1 << 10, 4, 7);
    let mut b = filter(1 << 10, 4, 7);
    assert_eq!(a.save(), b.save());
    for x in 0..500 {
        a.insert(x).unwrap();
        b.insert(x).unwrap();
    }
    for x in NEG..NEG + 5000 {
        a.checked_lookup(x).unwrap();
        b.checked_lookup(x).unwrap();
    }
    assert_eq!(a.save(), b.save());
}

#[test]
fn bad_epsilon_is_rejected() {
    assert!(matches!(BroomFilter::new(1 << 10, 3.0 / 7.0, 1), Err(FilterError::Params(_))));
}

#[test]
fn insert_into_empty_stores_baseline_without_remote_access() {
    let mut f = filter(1 << 10, 4, 1);
    f.insert(42).unwrap();
    let fps = f.local().fingerprints();
    assert_eq!(fps.len(), 1);
    assert_eq!(fps[0].bits.len(), f.params().baseline_bits());
    let t = f.counters().insert;
    assert_eq!((t.remote_accesses(), t.dictionary_ops), (0, 1));
}

#[test]
fn false_positive_is_fixed_immediately() {
    let mut f = filter(1 << 10, 4, 3);
    for x in 0..1024 {
        f.insert(x).unwrap();
    }
    for i in 0..50 {
        let x = false_positive(&f, NEG + i * 1_000_000);
        let before = f.counters().query_false_positive;
        assert!(f.checked_lookup(x).unwrap());
        assert!(f.counters().query_false_positive.remote_lookups > before.remote_lookups);
        assert!(!f.checked_lookup(x).unwrap());
    }
    f.check_invariants().unwrap();
}

#[test]
fn members_and_plain_negatives_cost_no_remote_access() {
    let mut f = filter(1 << 10, 6, 4);
    for x in 0..1000 {
        f.insert(x).unwrap();
    }
    for x in 0..1000 {
        assert!(f.checked_lookup(x).unwrap());
    }
    let mut negatives = 0;
    for x in NEG..NEG + 20_000 {
        if !f.lookup(x) {
            f.checked_lookup(x).unwrap();
            negatives += 1;
        }
    }
    assert!(negatives > 19_000);
    let c = f.counters();
    assert_eq!(c.query_true_positive.remote_accesses(), 0);
    assert_eq!(c.query_negative.remote_accesses(), 0);
    assert!(c.query_true_positive.local_word_reads >= 1000);
}

#[test]
fn adapting_a_non_false_positive_is_an_error() {
    let mut f = filter(1 << 10, 4, 4);
    f.insert(1).unwrap();
    assert_eq!(f.adapt(1), Err(FilterError::NotFalsePositive(1)));
    let x = (NEG..).find(|&x| !f.lookup(x)).unwrap();
    assert_eq!(f.adapt(x), Err(FilterError::NotFalsePositive(x)));
}

#[test]
fn preconditions_are_enforced() {
    let mut f = filter(16, 2, 1);
    f.insert(3).unwrap();
    assert_eq!(f.insert(3), Err(FilterError::Duplicate(3)));
    assert_eq!(f.delete(4), Err(FilterError::Absent(4)));
    for x in 100..115 {
        f.insert(x).unwrap();
    }
    assert_eq!(f.insert(999), Err(FilterError::Capacity(16)));
}

#[test]
fn reinsertion_inherits_ghost_bits() {
    let mut f = filter(1 << 10, 4, 5);
    for x in 0..1024 {
        f.insert(x).unwrap();
    }
    // Find a fix whose owner kept the frontier ahead of it.
    for i in 0..200 {
        let x = false_positive(&f, NEG + i * 1_000_000);
        f.checked_lookup(x).unwrap();
        let y = f.fixes().last().unwrap().owner;
        if f.phase().role_of(y) == broom::hash::GenRole::B {
            continue;
        }
        let own = |f: &BroomFilter, y| {
            let h = f.hashes(y);
            let m = f.local().query(&h);
            m.full.into_iter().find(|fp| h.for_level(fp.level).lcp(&fp.bits) == fp.bits.len()).unwrap()
        };
        let grown = own(&f, y).bits.len() - f.params().baseline_bits();
        assert!(grown >= 1);
        f.delete(y).unwrap();
        assert!(!f.lookup(x));
        f.insert(y).unwrap();
        assert!(own(&f, y).bits.len() - f.params().baseline_bits() >= grown);
        assert!(!f.lookup(x), "x collides with y again after delete and reinsert");
        f.check_invariants().unwrap();
        return;
    }
    panic!("no suitable fix found");
}

#[test]
fn delete_updates_a_constant_number_of_remote_entries() {
    let mut f = filter(1 << 8, 4, 6);
    for x in 0..256 {
        f.insert(x).unwrap();
    }
    for x in 0..256 {
        let before = f.counters().delete;
        f.delete(x).unwrap();
        let d = f.counters().delete.minus(&before);
        assert!(d.remote_updates <= 4 && d.remote_lookups == 0);
        assert_eq!(d.dictionary_ops, 1);
    }
    assert_eq!(f.remote().ghost_len(), 256);
    f.check_invariants().unwrap();
}

#[test]
fn frontier_walks_key_order_and_wraps() {
    let mut f = filter(1 << 10, 4, 8);
    let keys: Vec<u64> = (1..=9).map(|k| k * 1000).collect();
    for &k in &keys {
        f.insert(k).unwrap();
    }
    let gen0 = f.phase().gen_b;
    // Drive reclaim steps through false positives; each fix sweeps three keys.
    let mut frontiers = Vec::new();
    let mut probe = NEG;
    while frontiers.len() < 3 {
        probe = false_positive(&f, probe);
        let fixes = f.fixes().total();
        f.checked_lookup(probe).unwrap();
        assert_eq!(f.fixes().total(), fixes + 1);
        frontiers.push(f.phase().frontier);
    }
    assert_eq!(frontiers, vec![Some(3000), Some(6000), None]);
    assert_eq!(f.phase().phase_index, 1);
    assert_eq!(f.phase().gen_a, gen0);
    for &k in &keys {
        assert_eq!(f.remote().triple(k).unwrap().generation, gen0.id);
    }
    // Adaptivity from the old generation is gone: only the latest fix's bits remain.
    assert!(f.space().adaptivity_bits <= f.params().hash_bits as u64);
    f.check_invariants().unwrap();
}

#[test]
fn sweep_purges_ghosts() {
    let mut f = filter(1 << 10, 4, 9);
    for k in [10, 20, 30, 40] {
        f.insert(k).unwrap();
    }
    f.delete(10).unwrap();
    f.delete(20).unwrap();
    assert_eq!(f.space().ghosts, 2);
    let x = false_positive(&f, NEG);
    f.checked_lookup(x).unwrap();
    assert_eq!(f.space().ghosts, 0);
    assert_eq!(f.remote().ghost_len(), 0);
    assert_eq!(f.phase().frontier, Some(30));
    f.check_invariants().unwrap();
}

#[test]
fn full_hash_ties_keep_both_fingerprints() {
    let p = Params::from_log2(1 << 8, 4).unwrap();
    // Key 7 hashes exactly like key 3, and 11 like query 1 << 40.
    let hasher = AliasHasher::new([(7, 3), (1 << 40, 11)]);
    let mut f: BroomFilter<ReferenceStore, AliasHasher> = BroomFilter::with_params(p, 2, hasher);
    f.insert(3).unwrap();
    f.insert(7).unwrap();
    let fps = f.local().fingerprints();
    assert!(fps.iter().all(|fp| fp.bits.len() == f.params().hash_bits));
    assert_eq!(f.check_invariants().unwrap().ties, 1);
    assert!(f.fixes().ties() >= 1);
    f.delete(3).unwrap();
    assert!(f.lookup(7));

    f.insert(11).unwrap();
    assert!(f.checked_lookup(1 << 40).unwrap());
    // The tie cannot be fixed; the query stays a false positive.
    assert!(f.lookup(1 << 40));
    assert!(f.fixes().repeats().is_empty());
    f.check_invariants().unwrap();
}

#[test]
fn snapshot_round_trip() {
    let mut f = filter(1 << 8, 4, 10);
    for x in 0..200 {
        f.insert(x).unwrap();
    }
    for x in 0..50 {
        f.delete(x).unwrap();
    }
    for x in NEG..NEG + 3000 {
        f.checked_lookup(x).unwrap();
    }
    let bytes = f.save();
    let mut g: BroomFilter = BroomFilter::load(&bytes, MixHasher).unwrap();
    assert_eq!(g.save(), bytes);
    g.check_invariants().unwrap();
    for x in NEG + 3000..NEG + 6000 {
        assert_eq!(f.checked_lookup(x).unwrap(), g.checked_lookup(x).unwrap());
    }
    assert_eq!(f.save(), g.save());

    let mut bad = bytes.clone();
    bad[8] = 9;
    assert!(matches!(BroomFilter::<PackedStore>::load(&bad, MixHasher), Err(SnapshotError::Version { found: 9 })));
    assert!(matches!(BroomFilter::<PackedStore>::load(b"nope", MixHasher), Err(SnapshotError::Magic)));
}

#[test]
fn oblivious_mode_matches_quotient_baseline() {
    for (r, seed) in [(4, 1), (12, 2)] {
        let p = Params::from_log2(1 << 10, r).unwrap();
        let mut a: BroomFilter = BroomFilter::oblivious(p.clone(), seed, MixHasher);
        let mut b: QuotientBaseline = QuotientBaseline::with_params(p, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut live = BTreeSet::new();
        for _ in 0..50_000 {
            let x = rng.gen_range(0..3000u64);
            match rng.gen_range(0..3) {
                0 if live.len() < 1024 && !live.contains(&x) => {
                    let res = Amq::insert(&mut a, x);
                    assert_eq!(res, b.insert(x));
                    if res.is_ok() {
                        live.insert(x);
                    }
                }
                1 if live.contains(&x) => {
                    Amq::delete(&mut a, x).unwrap();
                    b.delete(x).unwrap();
                    live.remove(&x);
                }
                _ => {
                    let y = x + NEG;
                    let m = live.contains(&x);
                    assert_eq!(Amq::checked_lookup(&mut a, x, m).unwrap(), b.checked_lookup(x, m).unwrap());
                    assert_eq!(a.lookup(y), b.lookup(y));
                }
            }
        }
        assert_eq!(a.local().fingerprints(), b.store().fingerprints());
        assert_eq!(a.counters().total().remote_accesses(), 0);
    }
}

/// Random oracle-valid operations with invariant checks along the way.
fn soak<S: FingerprintStore>(n: u64, r: u32, ops: usize, seed: u64, check_every: usize) {
    let mut f: BroomFilter<S> = BroomFilter::with_params(Params::from_log2(n, r).unwrap(), seed, MixHasher);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut live: Vec<u64> = Vec::new();
    let universe = 4 * n;
    for step in 0..ops {
        let roll = rng.gen_range(0..10);
        if roll < 3 && (live.len() as u64) < n {
            let x = rng.gen_range(0..universe);
            if !f.contains(x) {
                f.insert(x).unwrap();
                live.push(x);
            }
        } else if roll < 5 && !live.is_empty() {
            let x = live.swap_remove(rng.gen_range(0..live.len()));
            f.delete(x).unwrap();
        } else if roll < 7 && !live.is_empty() {
            let x = live[rng.gen_range(0..live.len())];
            assert!(f.checked_lookup(x).unwrap(), "false negative at step {step}");
        } else {
            let x = NEG + rng.gen_range(0..universe);
            if f.checked_lookup(x).unwrap() {
                assert!(!f.lookup(x), "unfixed false positive at step {step}");
            }
        }
        if step % check_every == 0 {
            f.check_invariants().unwrap_or_else(|e| panic!("step {step}: {e}"));
        }
    }
    f.check_invariants().unwrap();
    assert!(f.fixes().repeats().is_empty(), "{:?}", f.fixes().repeats());
}

#[test]
fn soak_small_regime() {
    soak::<PackedStore>(1 << 8, 2, 100_000, 1, 500);
    soak::<ReferenceStore>(1 << 8, 4, 100_000, 2, 500);
}

#[test]
fn soak_large_regime() {
    soak::<PackedStore>(1 << 8, 8, 100_000, 3, 500);
    soak::<ReferenceStore>(1 << 10, 12, 100_000, 4, 2000);
}

#[test]
fn soak_tiny() {
    soak::<PackedStore>(16, 1, 50_000, 5, 50);
    soak::<PackedStore>(16, 12, 50_000, 6, 50);
}

#[test]
fn builds_give_identical_states() {
    let p = Params::from_log2(1 << 8, 4).unwrap();
    let mut a: BroomFilter<PackedStore> = BroomFilter::with_params(p.clone(), 5, MixHasher);
    let mut b: BroomFilter<ReferenceStore> = BroomFilter::with_params(p, 5, MixHasher);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..30_000 {
        let x = rng.gen_range(0..1024u64);
        if rng.gen_bool(0.5) {
            if a.contains(x) {
                a.delete(x).unwrap();
                b.delete(x).unwrap();
            } else if a.len() < 256 {
                a.insert(x).unwrap();
                b.insert(x).unwrap();
            }
        } else {
            assert_eq!(a.checked_lookup(x + NEG).unwrap(), b.checked_lookup(x + NEG).unwrap());
        }
    }
    assert_eq!(a.local().fingerprints(), b.local().fingerprints());
    assert_eq!(a.counters(), b.counters());
    assert_eq!(a.phase(), b.phase());
    let _ = Level::Primary;
}
