use serde::{Deserialize, Serialize};

use super::{AmqKind, GameError, KeyStream, Oracle};
use crate::local::SpaceReport;
use crate::params::Params;

/// Local space of a filter filled to capacity, against the near-optimal bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpaceCheck {
    pub amq: AmqKind,
    pub n: u64,
    pub eps_log2: u32,
    pub live: u64,
    pub total_bits: u64,
    pub bits_per_element: f64,
    /// `log2(1/epsilon)`, the bits per element any filter at this rate needs.
    pub information_bound: f64,
    /// Present for filters on the fingerprint store.
    pub report: Option<SpaceReport>,
    /// Secondary level plus backyard.
    pub overflow_bits: Option<u64>,
    /// `2 n (q + r) / log2 n`.
    pub overflow_bound_bits: Option<f64>,
    /// `(1 + alpha) n (r + 3) + 10 n` plus the overflow bits.
    pub bound_bits: Option<f64>,
    pub within_bound: Option<bool>,
}

impl SpaceCheck {
    pub fn from_report(amq: AmqKind, params: &Params, report: SpaceReport) -> Self {
        let n = params.n as f64;
        let overflow = report.secondary_bits + report.backyard_bits;
        let overflow_bound = 2.0 * n * (params.q + params.r) as f64 / params.q as f64;
        let bound = (1.0 + params.alpha) * n * (params.r + 3) as f64 + 10.0 * n + overflow as f64;
        let total = report.total_bits();
        SpaceCheck {
            amq,
            n: params.n,
            eps_log2: params.r,
            live: report.live,
            total_bits: total,
            bits_per_element: report.bits_per_element(),
            information_bound: params.r as f64,
            overflow_bits: Some(overflow),
            overflow_bound_bits: Some(overflow_bound),
            bound_bits: Some(bound),
            within_bound: Some(total as f64 <= bound && overflow as f64 <= overflow_bound),
            report: Some(report),
        }
    }
}

/// Fills a fresh filter with `n` random members and measures it.
pub fn measure_full(amq: AmqKind, n: u64, eps_log2: u32, seed: u64) -> Result<SpaceCheck, GameError> {
    let params = Params::from_log2(n, eps_log2).map_err(crate::amq::FilterError::from)?;
    let mut oracle = Oracle::new(amq.build(n, eps_log2, seed)?);
    let mut keys = KeyStream::new(seed);
    while !oracle.is_full() {
        let k = keys.member();
        if !oracle.contains(k) {
            oracle.insert(k)?;
        }
    }
    let f = oracle.amq();
    Ok(match f.space_report() {
        Some(report) => SpaceCheck::from_report(amq, &params, report),
        None => SpaceCheck {
            amq,
            n,
            eps_log2,
            live: f.len() as u64,
            total_bits: f.space_bits(),
            bits_per_element: f.space_bits() as f64 / f.len().max(1) as f64,
            information_bound: eps_log2 as f64,
            report: None,
            overflow_bits: None,
            overflow_bound_bits: None,
            bound_bits: None,
            within_bound: None,
        },
    })
}
