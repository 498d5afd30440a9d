//! TREC run files, qrels, and query-variation topic files.
//!
//! Runs are canonicalized on the way in: entries are re-sorted by descending
//! score (then stated rank, then ascending doc id) and ranks are renumbered
//! `1..n`. Writing a canonical run and parsing it back yields the same value.

use std::borrow::Borrow;
use std::cmp::Ordering;
use std::collections::{BTreeMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default per-topic depth for runs.
pub const DEFAULT_MAX_DEPTH: usize = 1000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrecError {
    #[error("line {line}: malformed line: {reason}")]
    MalformedLine { line: usize, reason: String },
    #[error("line {line}: document {doc_id} appears twice in topic {topic}")]
    DuplicateDocument {
        line: usize,
        topic: String,
        doc_id: String,
    },
    #[error("line {line}: run tag {found} differs from {expected}")]
    MixedTags {
        line: usize,
        expected: String,
        found: String,
    },
    #[error("line {line}: negative relevance grade {grade}")]
    NegativeGrade { line: usize, grade: i64 },
    #[error("line {line}: conflicting judgments for ({topic}, {doc_id}): {first} vs {second}")]
    DuplicateJudgment {
        line: usize,
        topic: String,
        doc_id: String,
        first: u32,
        second: u32,
    },
    #[error("line {line}: variation {variation_id} listed twice for topic {topic}")]
    DuplicateVariation {
        line: usize,
        topic: String,
        variation_id: String,
    },
    #[error("topic {topic}: invalid ranking: {reason}")]
    InvalidRanking { topic: String, reason: String },
}

/// A topic identifier.
///
/// Ordering is numeric when both ids are unsigned integers (so `2 < 10`),
/// numeric ids sort before non-numeric ones, and everything else falls back
/// to byte order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TopicId(String);

impl TopicId {
    pub fn new(id: impl Into<String>) -> Self {
        TopicId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    fn sort_key(&self) -> (bool, u128) {
        match self.0.parse::<u128>() {
            Ok(n) if self.0.bytes().all(|b| b.is_ascii_digit()) => (false, n),
            _ => (true, 0),
        }
    }
}

impl Ord for TopicId {
    fn cmp(&self, other: &Self) -> Ordering {
        self.sort_key()
            .cmp(&other.sort_key())
            .then_with(|| self.0.cmp(&other.0))
    }
}

impl PartialOrd for TopicId {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for TopicId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for TopicId {
    fn from(s: &str) -> Self {
        TopicId(s.to_owned())
    }
}

impl From<String> for TopicId {
    fn from(s: String) -> Self {
        TopicId(s)
    }
}

impl Borrow<str> for TopicId {
    fn borrow(&self) -> &str {
        &self.0
    }
}

/// One retrieved document. The topic and run tag live on the enclosing [`Run`].
#[derive(Debug, Clone, PartialEq)]
pub struct RunEntry {
    pub doc_id: String,
    pub rank: usize,
    pub score: f64,
}

/// A system's ranked output over a set of topics.
///
/// Construct through [`parse_run`] or the `insert_*` methods, which enforce
/// the ranking invariants: ranks `1..n`, non-increasing scores, no duplicate
/// documents, and at most `max_depth` entries per topic.
#[derive(Debug, Clone, PartialEq)]
pub struct Run {
    tag: String,
    topics: BTreeMap<TopicId, Vec<RunEntry>>,
    max_depth: usize,
}

impl Run {
    pub fn new(tag: impl Into<String>, max_depth: usize) -> Self {
        Run {
            tag: tag.into(),
            topics: BTreeMap::new(),
            max_depth,
        }
    }

    pub fn tag(&self) -> &str {
        &self.tag
    }

    pub fn with_tag(mut self, tag: impl Into<String>) -> Self {
        self.tag = tag.into();
        self
    }

    pub fn max_depth(&self) -> usize {
        self.max_depth
    }

    /// Entries for `topic` in rank order, empty if the topic is absent.
    pub fn topic(&self, topic: &str) -> &[RunEntry] {
        self.topics.get(topic).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn contains_topic(&self, topic: &str) -> bool {
        self.topics.contains_key(topic)
    }

    /// Topics in ascending order with their entries.
    pub fn topics(&self) -> impl Iterator<Item = (&TopicId, &[RunEntry])> {
        self.topics.iter().map(|(t, e)| (t, e.as_slice()))
    }

    pub fn topic_ids(&self) -> impl Iterator<Item = &TopicId> {
        self.topics.keys()
    }

    pub fn num_topics(&self) -> usize {
        self.topics.len()
    }

    /// Total number of entries across topics.
    pub fn len(&self) -> usize {
        self.topics.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Inserts a topic from unordered `(doc_id, score)` pairs, sorting by
    /// descending score with ties broken by ascending doc id and truncating
    /// to `max_depth`. Replaces any previous entries for the topic.
    pub fn insert_scored(
        &mut self,
        topic: TopicId,
        docs: Vec<(String, f64)>,
    ) -> Result<(), TrecError> {
        let mut docs = docs;
        check_scores(&topic, docs.iter().map(|(_, s)| *s))?;
        docs.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        self.insert_ordered(topic, docs)
    }

    /// Inserts a topic whose documents are already in rank order. Scores
    /// must be non-increasing; the list is truncated to `max_depth` and
    /// ranks are renumbered from 1.
    pub fn insert_ordered(
        &mut self,
        topic: TopicId,
        docs: Vec<(String, f64)>,
    ) -> Result<(), TrecError> {
        check_scores(&topic, docs.iter().map(|(_, s)| *s))?;
        if let Some(w) = docs.windows(2).find(|w| w[1].1 > w[0].1) {
            return Err(TrecError::InvalidRanking {
                topic: topic.0,
                reason: format!("score of {} exceeds score of {}", w[1].0, w[0].0),
            });
        }
        let mut seen = HashSet::with_capacity(docs.len());
        for (doc, _) in &docs {
            if !seen.insert(doc.as_str()) {
                return Err(TrecError::InvalidRanking {
                    topic: topic.0,
                    reason: format!("duplicate document {doc}"),
                });
            }
        }
        let entries = docs
            .into_iter()
            .take(self.max_depth)
            .enumerate()
            .map(|(i, (doc_id, score))| RunEntry {
                doc_id,
                rank: i + 1,
                score,
            })
            .collect();
        self.topics.insert(topic, entries);
        Ok(())
    }

    /// Checks every ranking invariant. Runs built through this module's
    /// constructors always pass.
    pub fn validate(&self) -> Result<(), TrecError> {
        for (topic, entries) in &self.topics {
            let bad = |reason: String| TrecError::InvalidRanking {
                topic: topic.0.clone(),
                reason,
            };
            if entries.len() > self.max_depth {
                return Err(bad(format!("{} entries exceed depth", entries.len())));
            }
            let mut seen = HashSet::new();
            for (i, e) in entries.iter().enumerate() {
                if e.rank != i + 1 {
                    return Err(bad(format!("rank {} at position {}", e.rank, i + 1)));
                }
                if !e.score.is_finite() {
                    return Err(bad(format!("non-finite score for {}", e.doc_id)));
                }
                if i > 0 && e.score > entries[i - 1].score {
                    return Err(bad(format!("scores increase at rank {}", e.rank)));
                }
                if !seen.insert(&e.doc_id) {
                    return Err(bad(format!("duplicate document {}", e.doc_id)));
                }
            }
        }
        Ok(())
    }
}

fn check_scores(topic: &TopicId, mut scores: impl Iterator<Item = f64>) -> Result<(), TrecError> {
    if scores.any(|s| !s.is_finite()) {
        return Err(TrecError::InvalidRanking {
            topic: topic.0.clone(),
            reason: "non-finite score".into(),
        });
    }
    Ok(())
}

fn fields(line: &str) -> Vec<&str> {
    line.split_whitespace().collect()
}

/// Parses a 6-column TREC run: `topic Q0 docid rank score tag`.
///
/// Blank lines are skipped. Entries are canonicalized per topic (descending
/// score, then stated rank, then doc id) and truncated to `max_depth`.
pub fn parse_run(text: &str, max_depth: usize) -> Result<Run, TrecError> {
    struct Raw {
        doc_id: String,
        rank: i64,
        score: f64,
    }

    let mut tag: Option<String> = None;
    let mut raw: BTreeMap<TopicId, Vec<Raw>> = BTreeMap::new();
    let mut seen: HashSet<(String, String)> = HashSet::new();

    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let cols = fields(line);
        if cols.is_empty() {
            continue;
        }
        let malformed = |reason: String| TrecError::MalformedLine {
            line: line_no,
            reason,
        };
        if cols.len() != 6 {
            return Err(malformed(format!(
                "expected 6 columns, found {}",
                cols.len()
            )));
        }
        let rank: i64 = cols[3]
            .parse()
            .map_err(|_| malformed(format!("rank {:?} is not an integer", cols[3])))?;
        let score: f64 = cols[4]
            .parse()
            .ok()
            .filter(|s: &f64| s.is_finite())
            .ok_or_else(|| malformed(format!("score {:?} is not a finite number", cols[4])))?;
        match &tag {
            None => tag = Some(cols[5].to_owned()),
            Some(t) if t != cols[5] => {
                return Err(TrecError::MixedTags {
                    line: line_no,
                    expected: t.clone(),
                    found: cols[5].to_owned(),
                })
            }
            Some(_) => {}
        }
        if !seen.insert((cols[0].to_owned(), cols[2].to_owned())) {
            return Err(TrecError::DuplicateDocument {
                line: line_no,
                topic: cols[0].to_owned(),
                doc_id: cols[2].to_owned(),
            });
        }
        raw.entry(TopicId::new(cols[0])).or_default().push(Raw {
            doc_id: cols[2].to_owned(),
            rank,
            score,
        });
    }

    let mut run = Run::new(tag.unwrap_or_default(), max_depth);
    for (topic, mut entries) in raw {
        entries.sort_by(|a, b| {
            b.score
                .total_cmp(&a.score)
                .then(a.rank.cmp(&b.rank))
                .then_with(|| a.doc_id.cmp(&b.doc_id))
        });
        if entries.windows(2).any(|w| w[0].rank > w[1].rank) {
            log::warn!(
                "run {}: topic {topic}: stated ranks disagree with scores; re-ranked by score",
                run.tag
            );
        }
        if entries.len() > max_depth {
            log::warn!(
                "run {}: topic {topic}: {} entries truncated to depth {max_depth}",
                run.tag,
                entries.len()
            );
        }
        let docs = entries.into_iter().map(|e| (e.doc_id, e.score)).collect();
        run.insert_ordered(topic, docs)?;
    }
    Ok(run)
}

/// Serializes a run as 6-column lines, topics ascending, then by rank.
/// Scores use the shortest decimal form that round-trips.
pub fn write_run(run: &Run) -> String {
    let mut out = String::new();
    for (topic, entries) in run.topics() {
        for e in entries {
            out.push_str(&format!(
                "{topic} Q0 {} {} {} {}\n",
                e.doc_id, e.rank, e.score, run.tag
            ));
        }
    }
    out
}

/// Relevance judgments: `(topic, doc) -> grade`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct JudgmentSet {
    judgments: BTreeMap<TopicId, BTreeMap<String, u32>>,
}

impl JudgmentSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn grade(&self, topic: &str, doc_id: &str) -> Option<u32> {
        self.judgments.get(topic)?.get(doc_id).copied()
    }

    pub fn is_judged(&self, topic: &str, doc_id: &str) -> bool {
        self.grade(topic, doc_id).is_some()
    }

    /// Records a judgment, returning the previous grade if one existed.
    pub fn insert(&mut self, topic: TopicId, doc_id: impl Into<String>, grade: u32) -> Option<u32> {
        self.judgments
            .entry(topic)
            .or_default()
            .insert(doc_id.into(), grade)
    }

    pub fn topics(&self) -> impl Iterator<Item = &TopicId> {
        self.judgments.keys()
    }

    /// Judgments for one topic, ordered by doc id.
    pub fn topic(&self, topic: &str) -> impl Iterator<Item = (&str, u32)> {
        self.judgments
            .get(topic)
            .into_iter()
            .flat_map(|m| m.iter().map(|(d, g)| (d.as_str(), *g)))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&TopicId, &str, u32)> {
        self.judgments
            .iter()
            .flat_map(|(t, m)| m.iter().map(move |(d, g)| (t, d.as_str(), *g)))
    }

    pub fn len(&self) -> usize {
        self.judgments.values().map(BTreeMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Keeps only the judgments for which `keep` returns true.
    pub fn filtered(&self, mut keep: impl FnMut(&TopicId, &str, u32) -> bool) -> JudgmentSet {
        let mut out = JudgmentSet::new();
        for (t, d, g) in self.iter() {
            if keep(t, d, g) {
                out.insert(t.clone(), d, g);
            }
        }
        out
    }

    /// Union of two judgment sets; on conflict `other` wins.
    pub fn merged(&self, other: &JudgmentSet) -> JudgmentSet {
        let mut out = self.clone();
        for (t, d, g) in other.iter() {
            out.insert(t.clone(), d, g);
        }
        out
    }

    /// True when every judgment here also appears, with the same grade, in `other`.
    pub fn is_subset_of(&self, other: &JudgmentSet) -> bool {
        self.iter()
            .all(|(t, d, g)| other.grade(t.as_str(), d) == Some(g))
    }
}

/// Parses 4-column qrels: `topic iter docid grade`. The iteration column is
/// ignored. A repeated pair with the same grade is accepted once.
pub fn parse_qrels(text: &str) -> Result<JudgmentSet, TrecError> {
    let mut qrels = JudgmentSet::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let cols = fields(line);
        if cols.is_empty() {
            continue;
        }
        if cols.len() != 4 {
            return Err(TrecError::MalformedLine {
                line: line_no,
                reason: format!("expected 4 columns, found {}", cols.len()),
            });
        }
        let grade: i64 = cols[3].parse().map_err(|_| TrecError::MalformedLine {
            line: line_no,
            reason: format!("grade {:?} is not an integer", cols[3]),
        })?;
        if grade < 0 {
            return Err(TrecError::NegativeGrade {
                line: line_no,
                grade,
            });
        }
        let grade = u32::try_from(grade).map_err(|_| TrecError::MalformedLine {
            line: line_no,
            reason: format!("grade {grade} out of range"),
        })?;
        if let Some(first) = qrels.grade(cols[0], cols[2]) {
            if first != grade {
                return Err(TrecError::DuplicateJudgment {
                    line: line_no,
                    topic: cols[0].to_owned(),
                    doc_id: cols[2].to_owned(),
                    first,
                    second: grade,
                });
            }
            continue;
        }
        qrels.insert(TopicId::new(cols[0]), cols[2], grade);
    }
    Ok(qrels)
}

/// Serializes judgments as `topic 0 docid grade` lines.
pub fn write_qrels(qrels: &JudgmentSet) -> String {
    qrels
        .iter()
        .map(|(t, d, g)| format!("{t} 0 {d} {g}\n"))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QueryVariation {
    pub variation_id: String,
    pub text: String,
}

/// Topics with their query variations, in file order within each topic.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TopicSet {
    topics: BTreeMap<TopicId, Vec<QueryVariation>>,
}

impl TopicSet {
    pub fn variations(&self, topic: &str) -> &[QueryVariation] {
        self.topics.get(topic).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&TopicId, &[QueryVariation])> {
        self.topics.iter().map(|(t, v)| (t, v.as_slice()))
    }

    pub fn topic_ids(&self) -> impl Iterator<Item = &TopicId> {
        self.topics.keys()
    }

    pub fn len(&self) -> usize {
        self.topics.len()
    }

    pub fn is_empty(&self) -> bool {
        self.topics.is_empty()
    }

    /// Distinct variation ids across all topics, in ascending order.
    pub fn variation_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self
            .topics
            .values()
            .flatten()
            .map(|v| v.variation_id.clone())
            .collect::<HashSet<_>>()
            .into_iter()
            .collect();
        ids.sort_by(|a, b| TopicId::new(a.as_str()).cmp(&TopicId::new(b.as_str())));
        ids
    }
}

/// Parses `topic_id<TAB>variation_id<TAB>query text` lines.
pub fn parse_topics(text: &str) -> Result<TopicSet, TrecError> {
    let mut set = TopicSet::default();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.splitn(3, '\t').collect();
        if cols.len() != 3 {
            return Err(TrecError::MalformedLine {
                line: line_no,
                reason: format!("expected 3 tab-separated columns, found {}", cols.len()),
            });
        }
        let (topic, variation, query) = (cols[0].trim(), cols[1].trim(), cols[2].trim());
        if topic.is_empty() || variation.is_empty() || query.is_empty() {
            return Err(TrecError::MalformedLine {
                line: line_no,
                reason: "empty column".into(),
            });
        }
        let vars = set.topics.entry(TopicId::new(topic)).or_default();
        if vars.iter().any(|v| v.variation_id == variation) {
            return Err(TrecError::DuplicateVariation {
                line: line_no,
                topic: topic.to_owned(),
                variation_id: variation.to_owned(),
            });
        }
        vars.push(QueryVariation {
            variation_id: variation.to_owned(),
            text: query.to_owned(),
        });
    }
    Ok(set)
}
