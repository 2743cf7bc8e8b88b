use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::transcript::{GameConfig, GameTranscript, RoundRecord};
use super::{AdversaryKind, GameError, KeyStream, Oracle};
use crate::amq::FilterError;
use crate::remote::AccessCounters;

/// Delete/reinsert probes allowed per key of capacity before the pair search gives up.
pub const DISCOVERY_TRIALS_PER_KEY: u64 = 8;

/// How the delete/reinsert attack found its pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Discovery {
    /// The false positive, if one turned up.
    pub x: Option<u64>,
    /// The member it collides with.
    pub y: Option<u64>,
    /// Fresh queries issued before `x` answered present.
    pub search_queries: u64,
    /// Delete/reinsert probes spent looking for `y`.
    pub trials: u64,
    /// Probing never re-exposed `x`, so `y` was read from the filter's own
    /// collision record instead.
    pub from_filter_record: bool,
}

struct Round {
    rec: RoundRecord,
    distinct: HashSet<u64>,
    before: AccessCounters,
}

impl Round {
    fn start(round: u32, oracle: &Oracle) -> Self {
        Round {
            rec: RoundRecord {
                round,
                ..RoundRecord::default()
            },
            distinct: HashSet::new(),
            before: oracle.amq().counters(),
        }
    }

    fn query(&mut self, oracle: &mut Oracle, x: u64) -> Result<bool, GameError> {
        debug_assert!(!oracle.contains(x));
        let present = oracle.lookup(x)?;
        self.rec.queries += 1;
        if present {
            self.rec.present += 1;
            self.rec.false_positives += 1;
            self.distinct.insert(x);
        } else {
            self.rec.absent += 1;
        }
        Ok(present)
    }

    fn finish(mut self, oracle: &Oracle) -> RoundRecord {
        let amq = oracle.amq();
        self.rec.distinct_false_positives = self.distinct.len() as u64;
        self.rec.counters = amq.counters().minus(&self.before);
        self.rec.live = amq.len() as u64;
        match amq.space_report() {
            Some(s) => {
                self.rec.space_bits = s.total_bits();
                self.rec.adaptivity_bits = s.adaptivity_bits;
                self.rec.max_group_adaptivity_bits = s.max_group_adaptivity_bits;
                self.rec.spilled_groups = s.spilled_groups;
            }
            None => {
                self.rec.space_bits = amq.space_bits();
                self.rec.adaptivity_bits = amq.adaptivity_bits();
            }
        }
        self.rec.repeated_collisions = amq.repeated_collisions();
        self.rec
    }
}

/// Plays one game: fill the filter with `n` random members, let the
/// adversary run its rounds, then look up its final output.
pub fn run_game(cfg: &GameConfig) -> Result<GameTranscript, GameError> {
    let mut oracle = Oracle::new(cfg.amq.build(cfg.n, cfg.eps_log2, cfg.seed)?);
    let mut keys = KeyStream::new(cfg.seed);
    if cfg.adversary == AdversaryKind::DeleteReinsert && !oracle.amq().supports_delete() {
        return Err(FilterError::Unsupported("delete").into());
    }
    while !oracle.is_full() {
        let k = keys.member();
        if !oracle.contains(k) {
            oracle.insert(k)?;
        }
    }
    let mut t = GameTranscript {
        config: cfg.clone(),
        setup_counters: oracle.amq().counters(),
        discovery: None,
        attack_ended_after: None,
        rounds: Vec::with_capacity(cfg.rounds as usize),
        final_query: 0,
        final_present: false,
        final_member: false,
        win: false,
    };

    let last = match cfg.adversary {
        AdversaryKind::Oblivious => {
            for round in 1..=cfg.rounds {
                let mut r = Round::start(round, &oracle);
                for _ in 0..cfg.n {
                    r.query(&mut oracle, keys.negative())?;
                }
                t.rounds.push(r.finish(&oracle));
            }
            keys.negative()
        }
        AdversaryKind::RepeatFp => {
            let mut replay: Vec<u64> = (0..cfg.n).map(|_| keys.negative()).collect();
            for round in 1..=cfg.rounds {
                let mut r = Round::start(round, &oracle);
                let mut next = Vec::new();
                for &x in &replay {
                    if r.query(&mut oracle, x)? {
                        next.push(x);
                    }
                }
                t.rounds.push(r.finish(&oracle));
                if !replay.is_empty() && next.is_empty() {
                    t.attack_ended_after = Some(round);
                }
                replay = next;
            }
            replay.first().copied().unwrap_or_else(|| keys.negative())
        }
        AdversaryKind::DeleteReinsert => {
            let d = discover(cfg, &mut oracle, &mut keys)?;
            if let (Some(x), Some(y)) = (d.x, d.y) {
                for round in 1..=cfg.rounds {
                    let mut r = Round::start(round, &oracle);
                    r.query(&mut oracle, x)?;
                    oracle.delete(y)?;
                    oracle.insert(y)?;
                    t.rounds.push(r.finish(&oracle));
                }
            }
            let x = d.x;
            t.discovery = Some(d);
            x.unwrap_or_else(|| keys.negative())
        }
    };

    t.final_query = last;
    t.final_member = oracle.contains(last);
    t.final_present = oracle.lookup(last)?;
    t.win = t.final_present && !t.final_member;
    Ok(t)
}

/// Finds a false positive `x`, then deletes and reinserts random members
/// until one deletion hides `x` and the reinsertion brings it back.
fn discover(cfg: &GameConfig, oracle: &mut Oracle, keys: &mut KeyStream) -> Result<Discovery, GameError> {
    let mut d = Discovery {
        x: None,
        y: None,
        search_queries: 0,
        trials: 0,
        from_filter_record: false,
    };
    let budget = 64u64 << cfg.eps_log2.min(32);
    while d.search_queries < budget {
        let q = keys.negative();
        d.search_queries += 1;
        if oracle.lookup(q)? {
            d.x = Some(q);
            break;
        }
    }
    let Some(x) = d.x else {
        return Ok(d);
    };
    let cap = DISCOVERY_TRIALS_PER_KEY * cfg.n;
    while d.trials < cap {
        d.trials += 1;
        let y = oracle.member(keys.below(oracle.len()));
        oracle.delete(y)?;
        let hidden = !oracle.lookup(x)?;
        oracle.insert(y)?;
        if hidden && oracle.lookup(x)? {
            d.y = Some(y);
            return Ok(d);
        }
    }
    d.y = oracle.amq().collision_owner(x).filter(|&y| oracle.contains(y));
    d.from_filter_record = d.y.is_some();
    Ok(d)
}

#[cfg(test)]
mod tests {
    use super::super::AmqKind;
    use super::*;

    fn cfg(amq: AmqKind, adversary: AdversaryKind, rounds: u32) -> GameConfig {
        GameConfig {
            amq,
            adversary,
            n: 256,
            eps_log2: 4,
            seed: 11,
            rounds,
        }
    }

    #[test]
    fn transcripts_are_deterministic() {
        for adv in AdversaryKind::ALL {
            let c = cfg(AmqKind::Broom, adv, 5);
            assert_eq!(run_game(&c).unwrap().to_json(), run_game(&c).unwrap().to_json());
        }
    }

    #[test]
    fn oblivious_rounds_have_n_queries() {
        let t = run_game(&cfg(AmqKind::Bloom, AdversaryKind::Oblivious, 3)).unwrap();
        assert_eq!(t.rounds.len(), 3);
        assert!(t.rounds.iter().all(|r| r.queries == 256 && r.present + r.absent == 256));
    }

    #[test]
    fn repeat_attack_on_broom_runs_dry() {
        let t = run_game(&cfg(AmqKind::Broom, AdversaryKind::RepeatFp, 10)).unwrap();
        assert_eq!(t.rounds.len(), 10);
        assert!(t.attack_ended_after.is_some());
        assert_eq!(t.rounds.last().unwrap().queries, 0);
    }

    #[test]
    fn repeat_attack_on_quotient_never_ends() {
        let t = run_game(&cfg(AmqKind::Quotient, AdversaryKind::RepeatFp, 6)).unwrap();
        assert!(t.attack_ended_after.is_none());
        assert!(t.rounds[1..].iter().all(|r| r.queries > 0 && r.fpr() == 1.0));
        assert!(t.win);
    }

    #[test]
    fn win_means_present_non_member() {
        for amq in [AmqKind::Broom, AmqKind::Quotient] {
            for adv in AdversaryKind::ALL {
                let t = run_game(&cfg(amq, adv, 4)).unwrap();
                assert!(!t.final_member);
                assert_eq!(t.win, t.final_present);
            }
        }
    }

    #[test]
    fn delete_reinsert_needs_deletes() {
        let e = run_game(&cfg(AmqKind::Bloom, AdversaryKind::DeleteReinsert, 4)).unwrap_err();
        assert!(matches!(e, GameError::Filter(FilterError::Unsupported(_))));
    }

    #[test]
    fn delete_reinsert_pair_found_on_both_filters() {
        let q = run_game(&cfg(AmqKind::Quotient, AdversaryKind::DeleteReinsert, 20)).unwrap();
        let d = q.discovery.as_ref().unwrap();
        assert!(d.y.is_some() && !d.from_filter_record);
        assert!(q.rounds.iter().all(|r| r.false_positives == 1));

        let b = run_game(&cfg(AmqKind::Broom, AdversaryKind::DeleteReinsert, 20)).unwrap();
        assert!(b.discovery.as_ref().unwrap().y.is_some());
        assert!(b.rounds.iter().all(|r| r.false_positives == 0 && r.repeated_collisions == 0));
    }
}
