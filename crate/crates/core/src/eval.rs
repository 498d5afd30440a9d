//! Rank-biased precision with residuals, precision@k, and residual
//! collection filtering.
//!
//! For a ranking of depth `d` and persistence `φ`, each rank `i` carries
//! weight `(1 − φ)·φ^(i−1)` and the unseen tail beyond `d` carries `φ^d`;
//! the weights sum to one. The RBP score is the weight on judged-relevant
//! ranks. The residual is the weight on unjudged ranks plus the tail: the
//! most the score could still grow if every unknown document were relevant.
//! Judged non-relevant ranks count toward neither, so
//! `score + residual + nonrelevant_weight = 1`.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::trec_io::{JudgmentSet, Run, TopicId};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("phi must be in (0, 1), got {0}")]
    InvalidPhi(f64),
    #[error("relevance threshold must be at least 1")]
    InvalidThreshold,
    #[error("k must be at least 1")]
    InvalidK,
    #[error("no topics to evaluate")]
    NoTopics,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalConfig {
    /// User persistence; 0.5 means an expected viewing depth of two documents.
    pub phi: f64,
    /// Minimum grade counted as relevant.
    pub rel_threshold: u32,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            phi: 0.5,
            rel_threshold: 1,
        }
    }
}

impl EvalConfig {
    pub fn new(phi: f64, rel_threshold: u32) -> Result<Self, EvalError> {
        let cfg = EvalConfig { phi, rel_threshold };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), EvalError> {
        if !(self.phi > 0.0 && self.phi < 1.0) {
            return Err(EvalError::InvalidPhi(self.phi));
        }
        if self.rel_threshold == 0 {
            return Err(EvalError::InvalidThreshold);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RbpScore {
    pub score: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RbpResult {
    pub tag: String,
    pub per_topic: BTreeMap<TopicId, RbpScore>,
    pub mean_score: f64,
    pub mean_residual: f64,
    /// Whether the run contributed to the judgment pool.
    pub pooled: bool,
}

impl RbpResult {
    pub fn with_pooled(mut self, pooled: bool) -> Self {
        self.pooled = pooled;
        self
    }
}

/// Judgment state of the document at one rank.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Judged {
    Relevant,
    NonRelevant,
    Unjudged,
}

/// RBP score and residual for one ranking given per-rank judgment states.
pub fn rbp_from_judgments(states: impl IntoIterator<Item = Judged>, phi: f64) -> RbpScore {
    let mut weight = 1.0 - phi;
    let mut score = 0.0;
    let mut nonrelevant = 0.0;
    for state in states {
        match state {
            Judged::Relevant => score += weight,
            Judged::NonRelevant => nonrelevant += weight,
            Judged::Unjudged => {}
        }
        weight *= phi;
    }
    // unjudged mass plus the tail, as the complement of the known mass
    let residual = ((1.0 - score) - nonrelevant).max(0.0);
    RbpScore { score, residual }
}

fn judge(qrels: &JudgmentSet, topic: &str, doc: &str, threshold: u32) -> Judged {
    match qrels.grade(topic, doc) {
        Some(g) if g >= threshold => Judged::Relevant,
        Some(_) => Judged::NonRelevant,
        None => Judged::Unjudged,
    }
}

fn dedup_topics(topics: &[TopicId]) -> Vec<&TopicId> {
    let mut t: Vec<&TopicId> = topics.iter().collect();
    t.sort();
    t.dedup();
    t
}

/// Evaluates RBP with residuals over `topics`. Topics the run lacks score
/// `(0, 1)`; topics with no judgments are still evaluated.
pub fn rbp_eval(
    run: &Run,
    qrels: &JudgmentSet,
    cfg: &EvalConfig,
    topics: &[TopicId],
) -> Result<RbpResult, EvalError> {
    cfg.validate()?;
    let topics = dedup_topics(topics);
    if topics.is_empty() {
        return Err(EvalError::NoTopics);
    }
    let per_topic: BTreeMap<TopicId, RbpScore> = topics
        .into_iter()
        .map(|t| {
            let states = run
                .topic(t.as_str())
                .iter()
                .map(|e| judge(qrels, t.as_str(), &e.doc_id, cfg.rel_threshold));
            (t.clone(), rbp_from_judgments(states, cfg.phi))
        })
        .collect();
    let n = per_topic.len() as f64;
    let mean_score = per_topic.values().map(|s| s.score).sum::<f64>() / n;
    let mean_residual = per_topic.values().map(|s| s.residual).sum::<f64>() / n;
    Ok(RbpResult {
        tag: run.tag().to_owned(),
        per_topic,
        mean_score,
        mean_residual,
        pooled: false,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrecisionResult {
    pub tag: String,
    pub k: usize,
    pub per_topic: BTreeMap<TopicId, f64>,
    pub mean: f64,
}

/// Fraction of the top `k` ranks holding a judged-relevant document. The
/// denominator is always `k`; unjudged and missing ranks count as misses.
pub fn precision_at_k(
    run: &Run,
    qrels: &JudgmentSet,
    k: usize,
    rel_threshold: u32,
    topics: &[TopicId],
) -> Result<PrecisionResult, EvalError> {
    if k == 0 {
        return Err(EvalError::InvalidK);
    }
    if rel_threshold == 0 {
        return Err(EvalError::InvalidThreshold);
    }
    let topics = dedup_topics(topics);
    if topics.is_empty() {
        return Err(EvalError::NoTopics);
    }
    let per_topic: BTreeMap<TopicId, f64> = topics
        .into_iter()
        .map(|t| {
            let hits = run
                .topic(t.as_str())
                .iter()
                .take(k)
                .filter(|e| judge(qrels, t.as_str(), &e.doc_id, rel_threshold) == Judged::Relevant)
                .count();
            (t.clone(), hits as f64 / k as f64)
        })
        .collect();
    let mean = per_topic.values().sum::<f64>() / per_topic.len() as f64;
    Ok(PrecisionResult {
        tag: run.tag().to_owned(),
        k,
        per_topic,
        mean,
    })
}

/// Removes every document already judged (at any grade) in `prior` for its
/// topic. Survivors keep their order and are renumbered from rank 1.
pub fn residual_filter(run: &Run, prior: &JudgmentSet) -> Run {
    let mut out = Run::new(run.tag(), run.max_depth());
    for (topic, entries) in run.topics() {
        let kept = entries
            .iter()
            .filter(|e| !prior.is_judged(topic.as_str(), &e.doc_id))
            .map(|e| (e.doc_id.clone(), e.score))
            .collect();
        out.insert_ordered(topic.clone(), kept)
            .expect("subsequence of a valid ranking is valid");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trec_io::parse_qrels;
    use proptest::prelude::*;

    fn run_of(topic: &str, docs: &[&str]) -> Run {
        let mut run = Run::new("r", 1000);
        let n = docs.len();
        run.insert_ordered(
            topic.into(),
            docs.iter()
                .enumerate()
                .map(|(i, d)| (d.to_string(), (n - i) as f64))
                .collect(),
        )
        .unwrap();
        run
    }

    fn t(ids: &[&str]) -> Vec<TopicId> {
        ids.iter().map(|s| TopicId::from(*s)).collect()
    }

    #[test]
    fn rbp_worked_examples() {
        let qrels = parse_qrels("1 0 a 1\n1 0 c 2\n1 0 x 1\n").unwrap();
        let run = run_of("1", &["a", "b", "c"]);
        let r = rbp_eval(&run, &qrels, &EvalConfig::default(), &t(&["1"])).unwrap();
        let s = r.per_topic[&TopicId::from("1")];
        assert!((s.score - 0.625).abs() < 1e-15);
        assert!((s.residual - 0.375).abs() < 1e-15);

        let qrels = parse_qrels("1 0 a 1\n1 0 b 1\n1 0 c 1\n").unwrap();
        let r = rbp_eval(&run, &qrels, &EvalConfig::default(), &t(&["1"])).unwrap();
        let s = r.per_topic[&TopicId::from("1")];
        assert!((s.score - 0.875).abs() < 1e-15);
        assert!((s.residual - 0.125).abs() < 1e-15);
    }

    #[test]
    fn missing_topic_is_zero_one() {
        let run = run_of("1", &["a"]);
        let r = rbp_eval(
            &run,
            &JudgmentSet::new(),
            &EvalConfig::default(),
            &t(&["9"]),
        )
        .unwrap();
        assert_eq!(
            r.per_topic[&TopicId::from("9")],
            RbpScore {
                score: 0.0,
                residual: 1.0
            }
        );
        assert_eq!((r.mean_score, r.mean_residual), (0.0, 1.0));
    }

    #[test]
    fn nonrelevant_ranks_count_toward_neither() {
        let qrels = parse_qrels("1 0 a 0\n").unwrap();
        let run = run_of("1", &["a"]);
        let r = rbp_eval(&run, &qrels, &EvalConfig::default(), &t(&["1"])).unwrap();
        assert_eq!(
            r.per_topic[&TopicId::from("1")],
            RbpScore {
                score: 0.0,
                residual: 0.5
            }
        );
    }

    #[test]
    fn threshold_binarizes() {
        let qrels = parse_qrels("1 0 a 1\n1 0 b 2\n").unwrap();
        let run = run_of("1", &["a", "b"]);
        let cfg = EvalConfig::new(0.5, 2).unwrap();
        let r = rbp_eval(&run, &qrels, &cfg, &t(&["1"])).unwrap();
        assert_eq!(r.per_topic[&TopicId::from("1")].score, 0.25);
    }

    #[test]
    fn invalid_config() {
        let run = run_of("1", &["a"]);
        for phi in [0.0, 1.0, -0.5, f64::NAN] {
            let cfg = EvalConfig {
                phi,
                rel_threshold: 1,
            };
            assert!(matches!(
                rbp_eval(&run, &JudgmentSet::new(), &cfg, &t(&["1"])),
                Err(EvalError::InvalidPhi(_))
            ));
        }
        assert_eq!(
            rbp_eval(&run, &JudgmentSet::new(), &EvalConfig::default(), &[]).unwrap_err(),
            EvalError::NoTopics
        );
    }

    #[test]
    fn precision_examples() {
        let qrels = parse_qrels("1 0 a 1\n1 0 b 1\n1 0 c 0\n1 0 d 0\n1 0 e 0\n").unwrap();
        let run = run_of("1", &["a", "b", "c", "d", "e"]);
        let p = precision_at_k(&run, &qrels, 5, 1, &t(&["1"])).unwrap();
        assert!((p.mean - 0.4).abs() < 1e-15);

        let run = run_of("1", &["a", "z"]);
        let p = precision_at_k(&run, &qrels, 5, 1, &t(&["1"])).unwrap();
        assert!((p.mean - 0.2).abs() < 1e-15);

        let run = run_of("1", &["c", "d"]);
        assert_eq!(
            precision_at_k(&run, &qrels, 5, 1, &t(&["1"])).unwrap().mean,
            0.0
        );
        assert_eq!(
            precision_at_k(&run, &qrels, 0, 1, &t(&["1"])).unwrap_err(),
            EvalError::InvalidK
        );
    }

    #[test]
    fn residual_filter_examples() {
        let run = run_of("1", &["A", "B", "C"]);
        let prior = parse_qrels("1 0 B 0\n").unwrap();
        let out = residual_filter(&run, &prior);
        let e: Vec<_> = out
            .topic("1")
            .iter()
            .map(|e| (e.doc_id.as_str(), e.rank))
            .collect();
        assert_eq!(e, [("A", 1), ("C", 2)]);

        assert_eq!(residual_filter(&run, &JudgmentSet::new()), run);

        let all = parse_qrels("1 0 A 1\n1 0 B 0\n1 0 C 2\n").unwrap();
        let out = residual_filter(&run, &all);
        assert!(out.topic("1").is_empty());
        let r = rbp_eval(&out, &all, &EvalConfig::default(), &t(&["1"])).unwrap();
        assert_eq!(
            r.per_topic[&TopicId::from("1")],
            RbpScore {
                score: 0.0,
                residual: 1.0
            }
        );
    }

    fn direct_residual(states: &[Judged], phi: f64) -> f64 {
        // independent route: unjudged weights plus phi^d
        let mut r = 0.0;
        for (i, s) in states.iter().enumerate() {
            if *s == Judged::Unjudged {
                r += (1.0 - phi) * phi.powi(i as i32);
            }
        }
        r + phi.powi(states.len() as i32)
    }

    proptest! {
        #[test]
        fn residual_matches_direct_sum(
            states in prop::collection::vec(prop_oneof![
                Just(Judged::Relevant), Just(Judged::NonRelevant), Just(Judged::Unjudged)
            ], 0..60),
            phi in 0.01f64..0.99,
        ) {
            let got = rbp_from_judgments(states.iter().copied(), phi);
            prop_assert!((got.residual - direct_residual(&states, phi)).abs() < 1e-12);
            prop_assert!(got.score >= 0.0 && got.score + got.residual <= 1.0);
        }

        #[test]
        fn fully_unjudged_is_exactly_zero_one(d in 1usize..300, phi in 0.01f64..0.99) {
            let got = rbp_from_judgments(std::iter::repeat_n(Judged::Unjudged, d), phi);
            prop_assert_eq!(got, RbpScore { score: 0.0, residual: 1.0 });
        }

        #[test]
        fn residual_filter_is_idempotent(
            docs in prop::collection::btree_set("[a-j]", 0..10),
            judged in prop::collection::btree_set("[a-j]", 0..10),
        ) {
            let docs: Vec<&str> = docs.iter().map(String::as_str).collect();
            let run = run_of("1", &docs);
            let mut prior = JudgmentSet::new();
            for d in &judged {
                prior.insert("1".into(), d.clone(), 0);
            }
            let once = residual_filter(&run, &prior);
            prop_assert!(once.validate().is_ok());
            prop_assert_eq!(residual_filter(&once, &prior), once.clone());
            prop_assert!(once.topic("1").iter().all(|e| !judged.contains(&e.doc_id)));
        }
    }
}
