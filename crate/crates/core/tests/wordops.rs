mod common;

use common::{wordops_case, WORDOPS};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn check(op: &str, seed: u64) -> Result<(), TestCaseError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    wordops_case(op, &mut rng).map_err(TestCaseError::fail)
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 4000, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn prefix_match_agrees(seed in any::<u64>()) { check("prefix_match", seed)?; }

    #[test]
    fn prefix_lengths_agree(seed in any::<u64>()) { check("prefix_lengths", seed)?; }

    #[test]
    fn insert_agrees(seed in any::<u64>()) { check("insert", seed)?; }

    #[test]
    fn delete_agrees(seed in any::<u64>()) { check("delete", seed)?; }

    #[test]
    fn replace_agrees(seed in any::<u64>()) { check("replace", seed)?; }

    #[test]
    fn splice_agrees(seed in any::<u64>()) { check("splice", seed)?; }

    #[test]
    fn concat_agrees(seed in any::<u64>()) { check("concat_adjacent", seed)?; }

    #[test]
    fn drop_prefix_all_agrees(seed in any::<u64>()) { check("drop_prefix_all", seed)?; }
}

#[test]
fn every_op_is_covered() {
    assert_eq!(WORDOPS.len(), 8);
    for op in WORDOPS {
        check(op, 1).unwrap();
    }
}

#[test]
fn raw_words_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..500 {
        let (p, _) = common::random_buffer(&mut rng);
        let (d, m) = p.raw_words();
        assert_eq!(broom::wordops::PackedStrings::from_raw(d, m, p.used()), Some(p));
    }
}
