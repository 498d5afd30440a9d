//! System rankings, rank shifts between judgment sets, boxplot outliers, and
//! CSV plot data.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;

use thiserror::Error;

use crate::eval::RbpResult;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("system tag {0} appears more than once")]
    DuplicateTag(String),
    #[error("need at least 4 values for quartiles, got {0}")]
    TooFewValues(usize),
    #[error("no evaluation results")]
    Empty,
    #[error("no evaluation result for system {0}")]
    UnknownTag(String),
}

/// Mean effectiveness of one system.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemSummary {
    pub tag: String,
    pub mean_score: f64,
    pub mean_residual: f64,
    pub pooled: bool,
}

impl From<&RbpResult> for SystemSummary {
    fn from(r: &RbpResult) -> Self {
        SystemSummary {
            tag: r.tag.clone(),
            mean_score: r.mean_score,
            mean_residual: r.mean_residual,
            pooled: r.pooled,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankedSystem {
    pub rank: usize,
    pub system: SystemSummary,
}

/// Systems ordered by mean score, best first; ties by ascending tag.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemRanking {
    pub entries: Vec<RankedSystem>,
}

impl SystemRanking {
    pub fn rank_of(&self, tag: &str) -> Option<usize> {
        self.entries
            .iter()
            .find(|e| e.system.tag == tag)
            .map(|e| e.rank)
    }

    pub fn get(&self, tag: &str) -> Option<&RankedSystem> {
        self.entries.iter().find(|e| e.system.tag == tag)
    }

    pub fn summaries(&self) -> impl Iterator<Item = &SystemSummary> {
        self.entries.iter().map(|e| &e.system)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

pub fn rank_systems(evals: &[RbpResult]) -> Result<SystemRanking, AnalysisError> {
    rank_summaries(evals.iter().map(SystemSummary::from).collect())
}

pub fn rank_summaries(mut systems: Vec<SystemSummary>) -> Result<SystemRanking, AnalysisError> {
    if systems.is_empty() {
        return Err(AnalysisError::Empty);
    }
    let mut seen = HashSet::new();
    if let Some(dup) = systems.iter().find(|s| !seen.insert(s.tag.as_str())) {
        return Err(AnalysisError::DuplicateTag(dup.tag.clone()));
    }
    systems.sort_by(|a, b| {
        b.mean_score
            .total_cmp(&a.mean_score)
            .then_with(|| a.tag.cmp(&b.tag))
    });
    Ok(SystemRanking {
        entries: systems
            .into_iter()
            .enumerate()
            .map(|(i, system)| RankedSystem {
                rank: i + 1,
                system,
            })
            .collect(),
    })
}

/// Quartiles, fences, and flagged values for one outlier multiplier.
#[derive(Debug, Clone, PartialEq)]
pub struct IqrOutliers {
    pub q1: f64,
    pub q3: f64,
    pub iqr: f64,
    pub multiplier: f64,
    pub lower_fence: f64,
    pub upper_fence: f64,
    /// Indices into the input of values strictly outside the fences.
    pub outliers: Vec<usize>,
}

/// Linear-interpolation quantile of sorted data at position `q·(n − 1)`.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Boxplot outliers: values strictly below `Q1 − m·IQR` or above `Q3 + m·IQR`.
pub fn iqr_outliers(values: &[f64], multiplier: f64) -> Result<IqrOutliers, AnalysisError> {
    if values.len() < 4 {
        return Err(AnalysisError::TooFewValues(values.len()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let q1 = quantile(&sorted, 0.25);
    let q3 = quantile(&sorted, 0.75);
    let iqr = q3 - q1;
    let lower_fence = q1 - multiplier * iqr;
    let upper_fence = q3 + multiplier * iqr;
    let outliers = values
        .iter()
        .enumerate()
        .filter(|(_, &v)| v < lower_fence || v > upper_fence)
        .map(|(i, _)| i)
        .collect();
    Ok(IqrOutliers {
        q1,
        q3,
        iqr,
        multiplier,
        lower_fence,
        upper_fence,
        outliers,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankShift {
    pub tag: String,
    pub rank_a: usize,
    pub rank_b: usize,
    /// `rank_a − rank_b`; positive means the system moved up under B.
    pub delta: i64,
    pub pooled: bool,
}

/// Which systems feed the outlier boxplot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OutlierSubset {
    #[default]
    All,
    Pooled,
    Unpooled,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OutlierConfig {
    pub mild: f64,
    pub extreme: f64,
    pub subset: OutlierSubset,
}

impl Default for OutlierConfig {
    fn default() -> Self {
        OutlierConfig {
            mild: 1.5,
            extreme: 3.0,
            subset: OutlierSubset::All,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankShiftReport {
    /// Systems ranked under both judgment sets, in rank-A order.
    pub shifts: Vec<RankShift>,
    pub only_in_a: Vec<String>,
    pub only_in_b: Vec<String>,
    /// Fences at the mild multiplier; `None` with fewer than 4 systems.
    pub mild: Option<IqrOutliers>,
    /// Fences at the extreme multiplier; `None` with fewer than 4 systems.
    pub extreme: Option<IqrOutliers>,
    pub mild_tags: Vec<String>,
    pub extreme_tags: Vec<String>,
}

impl RankShiftReport {
    pub fn delta(&self, tag: &str) -> Option<i64> {
        self.shifts.iter().find(|s| s.tag == tag).map(|s| s.delta)
    }

    pub fn is_extreme(&self, tag: &str) -> bool {
        self.extreme_tags.iter().any(|t| t == tag)
    }

    pub fn is_mild(&self, tag: &str) -> bool {
        self.mild_tags.iter().any(|t| t == tag)
    }

    /// `tag,rank_a,rank_b,delta,pooled,outlier` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("tag,rank_a,rank_b,delta,pooled,outlier\n");
        for s in &self.shifts {
            let class = if self.is_extreme(&s.tag) {
                "extreme"
            } else if self.is_mild(&s.tag) {
                "mild"
            } else {
                ""
            };
            let _ = writeln!(
                out,
                "{},{},{},{},{},{class}",
                s.tag, s.rank_a, s.rank_b, s.delta, s.pooled
            );
        }
        out
    }
}

pub fn rank_shift(a: &SystemRanking, b: &SystemRanking) -> RankShiftReport {
    rank_shift_with(a, b, &OutlierConfig::default())
}

pub fn rank_shift_with(
    a: &SystemRanking,
    b: &SystemRanking,
    cfg: &OutlierConfig,
) -> RankShiftReport {
    let b_ranks: BTreeMap<&str, usize> = b
        .entries
        .iter()
        .map(|e| (e.system.tag.as_str(), e.rank))
        .collect();
    let a_tags: HashSet<&str> = a.entries.iter().map(|e| e.system.tag.as_str()).collect();

    let shifts: Vec<RankShift> = a
        .entries
        .iter()
        .filter_map(|e| {
            let rank_b = *b_ranks.get(e.system.tag.as_str())?;
            Some(RankShift {
                tag: e.system.tag.clone(),
                rank_a: e.rank,
                rank_b,
                delta: e.rank as i64 - rank_b as i64,
                pooled: e.system.pooled,
            })
        })
        .collect();
    let only_in_a = a
        .entries
        .iter()
        .filter(|e| !b_ranks.contains_key(e.system.tag.as_str()))
        .map(|e| e.system.tag.clone())
        .collect();
    let only_in_b = b
        .entries
        .iter()
        .filter(|e| !a_tags.contains(e.system.tag.as_str()))
        .map(|e| e.system.tag.clone())
        .collect();

    let boxed: Vec<&RankShift> = shifts
        .iter()
        .filter(|s| match cfg.subset {
            OutlierSubset::All => true,
            OutlierSubset::Pooled => s.pooled,
            OutlierSubset::Unpooled => !s.pooled,
        })
        .collect();
    let deltas: Vec<f64> = boxed.iter().map(|s| s.delta as f64).collect();
    let fences = |m: f64| iqr_outliers(&deltas, m).ok();
    let (mild, extreme) = (fences(cfg.mild), fences(cfg.extreme));
    let tags = |o: &Option<IqrOutliers>| -> Vec<String> {
        o.as_ref()
            .map(|o| o.outliers.iter().map(|&i| boxed[i].tag.clone()).collect())
            .unwrap_or_default()
    };
    let (mild_tags, extreme_tags) = (tags(&mild), tags(&extreme));
    RankShiftReport {
        shifts,
        only_in_a,
        only_in_b,
        mild,
        extreme,
        mild_tags,
        extreme_tags,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SystemCurveRow {
    pub position: usize,
    pub tag: String,
    pub score: f64,
    pub score_plus_residual: f64,
    pub pooled: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TopicCurveRow {
    pub position: usize,
    pub topic: String,
    pub score: f64,
    pub score_plus_residual: f64,
}

/// Systems by descending mean score (ties by tag), with score + residual.
pub fn system_curve(evals: &[RbpResult]) -> Vec<SystemCurveRow> {
    let mut rows: Vec<&RbpResult> = evals.iter().collect();
    rows.sort_by(|a, b| {
        b.mean_score
            .total_cmp(&a.mean_score)
            .then_with(|| a.tag.cmp(&b.tag))
    });
    rows.into_iter()
        .enumerate()
        .map(|(i, r)| SystemCurveRow {
            position: i + 1,
            tag: r.tag.clone(),
            score: r.mean_score,
            score_plus_residual: r.mean_score + r.mean_residual,
            pooled: r.pooled,
        })
        .collect()
}

/// One system's topics by descending score (ties by topic id).
pub fn topic_curve(eval: &RbpResult) -> Vec<TopicCurveRow> {
    let mut rows: Vec<_> = eval.per_topic.iter().collect();
    rows.sort_by(|a, b| b.1.score.total_cmp(&a.1.score).then_with(|| a.0.cmp(b.0)));
    rows.into_iter()
        .enumerate()
        .map(|(i, (t, s))| TopicCurveRow {
            position: i + 1,
            topic: t.to_string(),
            score: s.score,
            score_plus_residual: s.score + s.residual,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CurveMode {
    PerSystem,
    /// Per-topic curve of the named system.
    PerTopic(String),
}

/// Plot data as CSV with a header row.
pub fn export_curves(evals: &[RbpResult], mode: &CurveMode) -> Result<String, AnalysisError> {
    if evals.is_empty() {
        return Err(AnalysisError::Empty);
    }
    let mut out = String::new();
    match mode {
        CurveMode::PerSystem => {
            out.push_str("position,tag,score,score_plus_residual,pooled\n");
            for r in system_curve(evals) {
                let _ = writeln!(
                    out,
                    "{},{},{:.6},{:.6},{}",
                    r.position, r.tag, r.score, r.score_plus_residual, r.pooled
                );
            }
        }
        CurveMode::PerTopic(tag) => {
            let eval = evals
                .iter()
                .find(|e| &e.tag == tag)
                .ok_or_else(|| AnalysisError::UnknownTag(tag.clone()))?;
            out.push_str("position,topic,score,score_plus_residual\n");
            for r in topic_curve(eval) {
                let _ = writeln!(
                    out,
                    "{},{},{:.6},{:.6}",
                    r.position, r.topic, r.score, r.score_plus_residual
                );
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::RbpScore;
    use crate::trec_io::TopicId;
    use proptest::prelude::*;

    fn summary(tag: &str, score: f64) -> SystemSummary {
        SystemSummary {
            tag: tag.into(),
            mean_score: score,
            mean_residual: 0.0,
            pooled: false,
        }
    }

    fn result(tag: &str, score: f64, residual: f64, pooled: bool) -> RbpResult {
        RbpResult {
            tag: tag.into(),
            per_topic: BTreeMap::new(),
            mean_score: score,
            mean_residual: residual,
            pooled,
        }
    }

    fn tags(r: &SystemRanking) -> Vec<(&str, usize)> {
        r.entries
            .iter()
            .map(|e| (e.system.tag.as_str(), e.rank))
            .collect()
    }

    #[test]
    fn ranks_by_score_then_tag() {
        let r = rank_summaries(vec![summary("Y", 0.4), summary("X", 0.6)]).unwrap();
        assert_eq!(tags(&r), [("X", 1), ("Y", 2)]);
        let r = rank_summaries(vec![summary("b", 0.5), summary("a", 0.5)]).unwrap();
        assert_eq!(tags(&r), [("a", 1), ("b", 2)]);
        assert_eq!(
            rank_summaries(vec![summary("a", 0.5), summary("a", 0.4)]).unwrap_err(),
            AnalysisError::DuplicateTag("a".into())
        );
        assert_eq!(rank_summaries(vec![]).unwrap_err(), AnalysisError::Empty);
    }

    #[test]
    fn rank_shift_sign_convention() {
        let mut a: Vec<_> = (0..70)
            .map(|i| summary(&format!("s{i:02}"), 1.0 - i as f64 / 100.0))
            .collect();
        let b_scores: Vec<_> = a
            .iter()
            .map(|s| {
                // s64 (rank 65 under A) jumps to rank 30 under B
                let score = if s.tag == "s64" { 0.715 } else { s.mean_score };
                summary(&s.tag, score)
            })
            .collect();
        let ra = rank_summaries(std::mem::take(&mut a)).unwrap();
        let rb = rank_summaries(b_scores).unwrap();
        assert_eq!(ra.rank_of("s64"), Some(65));
        assert_eq!(rb.rank_of("s64"), Some(30));
        let rep = rank_shift(&ra, &rb);
        assert_eq!(rep.delta("s64"), Some(35));
        assert_eq!(rep.shifts.iter().map(|s| s.delta).sum::<i64>(), 0);
        assert!(rep.is_extreme("s64"));
    }

    #[test]
    fn identical_rankings_have_zero_shift() {
        let r = rank_summaries(vec![
            summary("a", 0.3),
            summary("b", 0.2),
            summary("c", 0.1),
        ])
        .unwrap();
        let rep = rank_shift(&r, &r);
        assert!(rep.shifts.iter().all(|s| s.delta == 0));
        assert!(rep.mild.is_none());
    }

    #[test]
    fn adjacent_swap() {
        let a = rank_summaries(vec![summary("a", 0.3), summary("b", 0.2)]).unwrap();
        let b = rank_summaries(vec![summary("a", 0.2), summary("b", 0.3)]).unwrap();
        let rep = rank_shift(&a, &b);
        assert_eq!(rep.delta("a"), Some(-1));
        assert_eq!(rep.delta("b"), Some(1));
    }

    #[test]
    fn tag_mismatch_is_reported() {
        let a = rank_summaries(vec![summary("a", 0.3), summary("b", 0.2)]).unwrap();
        let b = rank_summaries(vec![summary("a", 0.2), summary("c", 0.3)]).unwrap();
        let rep = rank_shift(&a, &b);
        assert_eq!(rep.only_in_a, ["b"]);
        assert_eq!(rep.only_in_b, ["c"]);
        assert_eq!(rep.shifts.len(), 1);
    }

    #[test]
    fn iqr_hand_check() {
        let o = iqr_outliers(&[1.0, 2.0, 3.0, 4.0, 100.0], 3.0).unwrap();
        assert_eq!((o.q1, o.q3, o.iqr), (2.0, 4.0, 2.0));
        assert_eq!(o.upper_fence, 10.0);
        assert_eq!(o.lower_fence, -4.0);
        assert_eq!(o.outliers, [4]);
        let flat = iqr_outliers(&[5.0; 6], 3.0).unwrap();
        assert_eq!(flat.iqr, 0.0);
        assert!(flat.outliers.is_empty());
        assert_eq!(
            iqr_outliers(&[1.0, 2.0, 3.0], 1.5).unwrap_err(),
            AnalysisError::TooFewValues(3)
        );
    }

    #[test]
    fn interpolated_quartiles() {
        // n = 6: Q1 at position 1.25, Q3 at 3.75
        let o = iqr_outliers(&[6.0, 1.0, 5.0, 2.0, 4.0, 3.0], 1.5).unwrap();
        assert!((o.q1 - 2.25).abs() < 1e-15);
        assert!((o.q3 - 4.75).abs() < 1e-15);
    }

    #[test]
    fn system_curve_rows() {
        let evals = [result("b", 0.4, 0.3, false), result("a", 0.6, 0.1, true)];
        let rows = system_curve(&evals);
        assert_eq!(rows[0].tag, "a");
        assert!(rows[0].pooled);
        assert!((rows[0].score_plus_residual - 0.7).abs() < 1e-15);
        assert_eq!(rows[1].position, 2);
        assert!((rows[1].score_plus_residual - 0.7).abs() < 1e-15);
        let csv = export_curves(&evals, &CurveMode::PerSystem).unwrap();
        assert_eq!(
            csv,
            "position,tag,score,score_plus_residual,pooled\n\
             1,a,0.600000,0.700000,true\n\
             2,b,0.400000,0.700000,false\n"
        );
    }

    #[test]
    fn topic_curve_rows() {
        let mut r = result("x", 0.0, 0.0, false);
        for (t, s) in [("1", 0.9), ("2", 0.2), ("3", 0.5)] {
            r.per_topic.insert(
                TopicId::from(t),
                RbpScore {
                    score: s,
                    residual: 0.0,
                },
            );
        }
        let order: Vec<f64> = topic_curve(&r).iter().map(|row| row.score).collect();
        assert_eq!(order, [0.9, 0.5, 0.2]);
        assert!(export_curves(&[r.clone()], &CurveMode::PerTopic("x".into())).is_ok());
        assert_eq!(
            export_curves(&[r], &CurveMode::PerTopic("y".into())).unwrap_err(),
            AnalysisError::UnknownTag("y".into())
        );
    }

    fn arb_summaries() -> impl Strategy<Value = Vec<SystemSummary>> {
        prop::collection::btree_map("[a-z]{1,4}", (0u32..20, any::<bool>()), 1..30).prop_map(|m| {
            m.into_iter()
                .map(|(tag, (s, pooled))| SystemSummary {
                    tag,
                    mean_score: f64::from(s) / 20.0,
                    mean_residual: 0.0,
                    pooled,
                })
                .collect()
        })
    }

    proptest! {
        #[test]
        fn ranking_is_idempotent(systems in arb_summaries()) {
            let r = rank_summaries(systems).unwrap();
            let again = rank_summaries(r.summaries().cloned().collect()).unwrap();
            prop_assert_eq!(again, r);
        }

        #[test]
        fn rank_shift_is_antisymmetric(a in arb_summaries(), seed in any::<u64>()) {
            let b: Vec<_> = a
                .iter()
                .enumerate()
                .map(|(i, s)| SystemSummary {
                    mean_score: ((seed.wrapping_mul(i as u64 + 7) >> 5) % 17) as f64,
                    ..s.clone()
                })
                .collect();
            let (ra, rb) = (rank_summaries(a).unwrap(), rank_summaries(b).unwrap());
            let ab = rank_shift(&ra, &rb);
            let ba = rank_shift(&rb, &ra);
            for s in &ab.shifts {
                prop_assert_eq!(ba.delta(&s.tag), Some(-s.delta));
            }
            prop_assert_eq!(ab.shifts.iter().map(|s| s.delta).sum::<i64>(), 0);
            for t in &ab.extreme_tags {
                prop_assert!(ab.is_mild(t));
            }
        }

        #[test]
        fn extreme_outliers_nest_in_mild(values in prop::collection::vec(-1e3f64..1e3, 4..60)) {
            let mild = iqr_outliers(&values, 1.5).unwrap();
            let extreme = iqr_outliers(&values, 3.0).unwrap();
            prop_assert!(extreme.outliers.iter().all(|i| mild.outliers.contains(i)));
        }

        #[test]
        fn curve_is_monotone(scores in prop::collection::vec((0.0f64..1.0, 0.0f64..1.0), 1..40)) {
            let evals: Vec<_> = scores
                .iter()
                .enumerate()
                .map(|(i, (s, r))| result(&format!("s{i}"), s * 0.5, r * 0.5, i % 2 == 0))
                .collect();
            let rows = system_curve(&evals);
            prop_assert!(rows.windows(2).all(|w| w[0].score >= w[1].score));
            prop_assert!(rows.iter().all(|r| r.score_plus_residual <= 1.0 + 1e-12));
        }
    }
}
