//! Depth-k pooling and judgment coverage.
//!
//! Multi-round residual-collection pooling is a composition of existing
//! pieces: filter each run against the judgments so far with
//! [`residual_filter`](crate::eval::residual_filter), pool the survivors,
//! judge the pool, merge, repeat.

use std::collections::{BTreeMap, BTreeSet};

use crate::trec_io::{JudgmentSet, Run, TopicId};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pool {
    pub members: BTreeSet<(TopicId, String)>,
    pub depth: usize,
    pub source_tags: Vec<String>,
}

impl Pool {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, topic: &str, doc_id: &str) -> bool {
        self.members
            .range((TopicId::from(topic), doc_id.to_owned())..)
            .next()
            .is_some_and(|(t, d)| t.as_str() == topic && d == doc_id)
    }

    /// Judges every pooled document with `assessor`, which returns a grade.
    pub fn judge(&self, mut assessor: impl FnMut(&TopicId, &str) -> u32) -> JudgmentSet {
        let mut out = JudgmentSet::new();
        for (t, d) in &self.members {
            out.insert(t.clone(), d.clone(), assessor(t, d));
        }
        out
    }

    /// `topic<TAB>doc_id` lines, sorted.
    pub fn to_tsv(&self) -> String {
        self.members
            .iter()
            .map(|(t, d)| format!("{t}\t{d}\n"))
            .collect()
    }
}

/// Union over `runs` of each topic's top `depth` documents.
pub fn pool_runs(runs: &[Run], depth: usize) -> Pool {
    let members = runs
        .iter()
        .flat_map(|run| {
            run.topics().flat_map(move |(t, entries)| {
                entries
                    .iter()
                    .take(depth)
                    .map(move |e| (t.clone(), e.doc_id.clone()))
            })
        })
        .collect();
    let mut source_tags: Vec<String> = runs.iter().map(|r| r.tag().to_owned()).collect();
    source_tags.sort();
    source_tags.dedup();
    Pool {
        members,
        depth,
        source_tags,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Coverage {
    pub per_topic: BTreeMap<TopicId, f64>,
    /// Mean over topics with at least one retrieved document; 0 if none.
    pub mean: f64,
}

/// Fraction of each topic's top `depth` retrieved documents that carry a
/// judgment of any grade. The denominator is the number retrieved (at most
/// `depth`); topics with nothing retrieved are left out.
pub fn judgment_coverage(run: &Run, qrels: &JudgmentSet, depth: usize) -> Coverage {
    let per_topic: BTreeMap<TopicId, f64> = run
        .topics()
        .filter(|(_, entries)| !entries.is_empty() && depth > 0)
        .map(|(t, entries)| {
            let top = &entries[..entries.len().min(depth)];
            let judged = top
                .iter()
                .filter(|e| qrels.is_judged(t.as_str(), &e.doc_id))
                .count();
            (t.clone(), judged as f64 / top.len() as f64)
        })
        .collect();
    let mean = if per_topic.is_empty() {
        0.0
    } else {
        per_topic.values().sum::<f64>() / per_topic.len() as f64
    };
    Coverage { per_topic, mean }
}
