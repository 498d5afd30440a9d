//! Freshness decay and relevance + freshness re-ranking.
//!
//! Freshness is an exponential decay in days since publication, fitted
//! through two points: `(0, 1)` and `(120, 0.01)` by default, which gives a
//! per-day base of `0.01^(1/120) ≈ 0.9623506264`. A re-ranked document's
//! score is its min-max normalized relevance score plus its freshness, with
//! equal weight.

use std::collections::HashMap;

use chrono::NaiveDate;
use thiserror::Error;

use crate::corpus::{days_since, DocMeta};
use crate::fusion::minmax_scores;
use crate::trec_io::Run;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FreshnessError {
    #[error("invalid decay fit points ({0}, {1}) and ({2}, {3})")]
    InvalidFitPoints(f64, f64, f64, f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayParams {
    start: (f64, f64),
    end: (f64, f64),
    ln_base: f64,
    pub ref_date: NaiveDate,
}

impl DecayParams {
    /// Decay through `(0, 1)` and `(120, 0.01)`.
    pub fn new(ref_date: NaiveDate) -> Self {
        Self::with_fit_points((0.0, 1.0), (120.0, 0.01), ref_date)
            .expect("default fit points are valid")
    }

    /// Decay through two `(days, value)` points. The later point must have
    /// the smaller, positive value.
    pub fn with_fit_points(
        start: (f64, f64),
        end: (f64, f64),
        ref_date: NaiveDate,
    ) -> Result<Self, FreshnessError> {
        let (d0, v0) = start;
        let (d1, v1) = end;
        let ok = [d0, v0, d1, v1].iter().all(|x| x.is_finite())
            && d1 > d0
            && v0 > 0.0
            && v1 > 0.0
            && v1 < v0;
        if !ok {
            return Err(FreshnessError::InvalidFitPoints(d0, v0, d1, v1));
        }
        Ok(DecayParams {
            start,
            end,
            ln_base: (v1 / v0).ln() / (d1 - d0),
            ref_date,
        })
    }

    /// Per-day multiplicative decay factor.
    pub fn base(&self) -> f64 {
        self.ln_base.exp()
    }

    pub fn fit_points(&self) -> [(f64, f64); 2] {
        [self.start, self.end]
    }
}

/// Freshness after `days` days: `v0 · base^(days − d0)`, evaluated as an
/// exponential of a product.
pub fn decay(days: u32, p: &DecayParams) -> f64 {
    decay_at(f64::from(days), p)
}

/// [`decay`] for fractional days, for plotting.
pub fn decay_at(days: f64, p: &DecayParams) -> f64 {
    let (d0, v0) = p.start;
    if d0 == 0.0 && v0 == 1.0 {
        (days * p.ln_base).exp()
    } else {
        v0 * ((days - d0) * p.ln_base).exp()
    }
}

/// Re-ranks each topic by normalized relevance plus freshness.
///
/// Per topic: scores are min-max normalized, `decay(days_since(pub_date,
/// ref_date))` is added, and entries are stably re-sorted by the combined
/// score, so equal combined scores keep their input order. Documents missing
/// from `meta` get zero freshness and stay in the ranking.
pub fn freshness_rerank(run: &Run, meta: &[DocMeta], p: &DecayParams) -> Run {
    let dates: HashMap<&str, NaiveDate> = meta
        .iter()
        .map(|d| (d.doc_id.as_str(), d.pub_date))
        .collect();
    rerank_with_dates(run, &dates, p)
}

/// [`freshness_rerank`] with a prebuilt doc id → publication date map.
pub fn rerank_with_dates(run: &Run, dates: &HashMap<&str, NaiveDate>, p: &DecayParams) -> Run {
    let mut missing = 0usize;
    let mut out = Run::new(run.tag(), run.max_depth());
    for (topic, entries) in run.topics() {
        let raw: Vec<f64> = entries.iter().map(|e| e.score).collect();
        let normalized = minmax_scores(&raw).unwrap_or_default();
        let mut combined: Vec<(String, f64)> = entries
            .iter()
            .zip(normalized)
            .map(|(e, n)| {
                let fresh = match dates.get(e.doc_id.as_str()) {
                    Some(&pub_date) => decay(days_since(pub_date, p.ref_date), p),
                    None => {
                        missing += 1;
                        0.0
                    }
                };
                (e.doc_id.clone(), n + fresh)
            })
            .collect();
        combined.sort_by(|a, b| b.1.total_cmp(&a.1));
        out.insert_ordered(topic.clone(), combined)
            .expect("re-sorted topic is a valid ranking");
    }
    if missing > 0 {
        log::warn!(
            "run {}: {missing} retrieved documents have no metadata; freshness 0 used",
            run.tag()
        );
    }
    out
}
