use serde::{Deserialize, Serialize};

use super::game::Discovery;
use super::{AdversaryKind, AmqKind};
use crate::remote::{AccessCounters, OpClass};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GameConfig {
    pub amq: AmqKind,
    pub adversary: AdversaryKind,
    pub n: u64,
    /// The target rate is `2^-eps_log2`.
    pub eps_log2: u32,
    pub seed: u64,
    pub rounds: u32,
}

impl GameConfig {
    pub fn epsilon(&self) -> f64 {
        (-(self.eps_log2 as f64)).exp2()
    }
}

/// One round of queries. Every query in a round is a non-member, so
/// `present` counts false positives before any adaptation.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: u32,
    pub queries: u64,
    pub present: u64,
    pub absent: u64,
    pub false_positives: u64,
    pub distinct_false_positives: u64,
    /// Access counters accrued during the round.
    pub counters: AccessCounters,
    pub live: u64,
    pub space_bits: u64,
    pub adaptivity_bits: u64,
    pub max_group_adaptivity_bits: u64,
    pub spilled_groups: u64,
    /// Running count of collisions repeated under unchanged hashes.
    pub repeated_collisions: u64,
}

impl RoundRecord {
    pub fn fpr(&self) -> f64 {
        if self.queries == 0 {
            0.0
        } else {
            self.false_positives as f64 / self.queries as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameTranscript {
    pub config: GameConfig,
    /// Counters spent filling the set before the first round.
    pub setup_counters: AccessCounters,
    /// Pair search of the delete/reinsert attack.
    pub discovery: Option<Discovery>,
    /// Last round of the repeat attack that had queries to replay.
    pub attack_ended_after: Option<u32>,
    pub rounds: Vec<RoundRecord>,
    /// The adversary's final output and the oracle's verdict on it.
    pub final_query: u64,
    pub final_present: bool,
    pub final_member: bool,
    pub win: bool,
}

impl GameTranscript {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("transcripts serialize")
    }

    pub fn from_json(s: &str) -> serde_json::Result<Self> {
        serde_json::from_str(s)
    }
}

/// Per-round aggregate, flat so it maps onto one CSV row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub round: u32,
    pub queries: u64,
    pub false_positives: u64,
    pub fpr: f64,
    pub cumulative_false_positives: u64,
    pub remote_query_negative: u64,
    pub remote_query_false_positive: u64,
    pub remote_query_true_positive: u64,
    pub remote_insert: u64,
    pub remote_delete: u64,
    pub remote_adapt_reclaim: u64,
    pub live: u64,
    pub space_bits: u64,
    pub adaptivity_bits: u64,
    pub bits_per_element: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub config: GameConfig,
    pub rows: Vec<SummaryRow>,
    pub total_queries: u64,
    pub total_false_positives: u64,
    pub fpr: f64,
    /// Counters summed over all rounds, setup excluded.
    pub counters: AccessCounters,
    pub max_adaptivity_bits: u64,
    pub bits_per_element: f64,
    pub win: bool,
}

fn per_element(bits: u64, live: u64) -> f64 {
    if live == 0 {
        0.0
    } else {
        bits as f64 / live as f64
    }
}

pub fn summarize(t: &GameTranscript) -> Summary {
    let mut cumulative = 0;
    let mut counters = AccessCounters::default();
    let rows: Vec<SummaryRow> = t
        .rounds
        .iter()
        .map(|r| {
            cumulative += r.false_positives;
            for class in OpClass::ALL {
                let (sum, d) = (counters.get_mut(class), r.counters.get(class));
                sum.remote_lookups += d.remote_lookups;
                sum.remote_updates += d.remote_updates;
                sum.dictionary_ops += d.dictionary_ops;
                sum.local_word_reads += d.local_word_reads;
                sum.local_word_writes += d.local_word_writes;
            }
            let remote = |c| r.counters.get(c).remote_accesses();
            SummaryRow {
                round: r.round,
                queries: r.queries,
                false_positives: r.false_positives,
                fpr: r.fpr(),
                cumulative_false_positives: cumulative,
                remote_query_negative: remote(OpClass::QueryNegative),
                remote_query_false_positive: remote(OpClass::QueryFalsePositive),
                remote_query_true_positive: remote(OpClass::QueryTruePositive),
                remote_insert: remote(OpClass::Insert),
                remote_delete: remote(OpClass::Delete),
                remote_adapt_reclaim: remote(OpClass::AdaptReclaim),
                live: r.live,
                space_bits: r.space_bits,
                adaptivity_bits: r.adaptivity_bits,
                bits_per_element: per_element(r.space_bits, r.live),
            }
        })
        .collect();
    let total_queries = rows.iter().map(|r| r.queries).sum();
    let last = t.rounds.last();
    Summary {
        config: t.config.clone(),
        total_queries,
        total_false_positives: cumulative,
        fpr: if total_queries == 0 { 0.0 } else { cumulative as f64 / total_queries as f64 },
        counters,
        max_adaptivity_bits: t.rounds.iter().map(|r| r.adaptivity_bits).max().unwrap_or(0),
        bits_per_element: last.map_or(0.0, |r| per_element(r.space_bits, r.live)),
        win: t.win,
        rows,
    }
}

impl Summary {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("summaries serialize")
    }

    /// One header row, then one row per round.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        if self.rows.is_empty() {
            // serde only emits headers alongside the first record.
            w.write_record(CSV_HEADERS).expect("in-memory write");
        }
        for row in &self.rows {
            w.serialize(row).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8")
    }
}

pub const CSV_HEADERS: [&str; 15] = [
    "round",
    "queries",
    "false_positives",
    "fpr",
    "cumulative_false_positives",
    "remote_query_negative",
    "remote_query_false_positive",
    "remote_query_true_positive",
    "remote_insert",
    "remote_delete",
    "remote_adapt_reclaim",
    "live",
    "space_bits",
    "adaptivity_bits",
    "bits_per_element",
];

#[cfg(test)]
mod tests {
    use super::*;

    fn record(round: u32, queries: u64, fps: u64) -> RoundRecord {
        let mut counters = AccessCounters::default();
        counters.get_mut(OpClass::QueryFalsePositive).remote_lookups = fps;
        RoundRecord {
            round,
            queries,
            present: fps,
            absent: queries - fps,
            false_positives: fps,
            distinct_false_positives: fps,
            counters,
            live: 10,
            space_bits: 250,
            ..RoundRecord::default()
        }
    }

    fn transcript() -> GameTranscript {
        GameTranscript {
            config: GameConfig {
                amq: AmqKind::Broom,
                adversary: AdversaryKind::Oblivious,
                n: 16,
                eps_log2: 4,
                seed: 0,
                rounds: 3,
            },
            setup_counters: AccessCounters::default(),
            discovery: None,
            attack_ended_after: None,
            rounds: vec![record(1, 100, 6), record(2, 50, 1), record(3, 0, 0)],
            final_query: 7,
            final_present: false,
            final_member: false,
            win: false,
        }
    }

    #[test]
    fn totals_are_sums_of_rounds() {
        let s = summarize(&transcript());
        assert_eq!(s.total_queries, 150);
        assert_eq!(s.total_false_positives, 7);
        assert_eq!(s.rows[2].cumulative_false_positives, 7);
        assert_eq!(s.counters.get(OpClass::QueryFalsePositive).remote_lookups, 7);
    }

    #[test]
    fn fpr_is_false_positives_over_queries() {
        let s = summarize(&transcript());
        assert_eq!(s.rows[0].fpr, 0.06);
        assert_eq!(s.rows[1].fpr, 0.02);
        assert_eq!(s.rows[2].fpr, 0.0);
        assert_eq!(s.fpr, 7.0 / 150.0);
    }

    #[test]
    fn bits_per_element_is_bits_over_live() {
        let s = summarize(&transcript());
        assert_eq!(s.rows[0].bits_per_element, 25.0);
        assert_eq!(s.bits_per_element, 25.0);
    }

    #[test]
    fn csv_has_headers_and_a_row_per_round() {
        let t = transcript();
        let csv = summarize(&t).to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 4);
        assert_eq!(lines[0], CSV_HEADERS.join(","));
        let empty = GameTranscript { rounds: vec![], ..t };
        assert_eq!(summarize(&empty).to_csv().trim_end(), CSV_HEADERS.join(","));
    }

    #[test]
    fn json_round_trips() {
        let t = transcript();
        assert_eq!(GameTranscript::from_json(&t.to_json()).unwrap(), t);
    }
}
