//! Min-max normalization, CombSUM, and double fusion.
//!
//! Double fusion runs every query variation of a topic through every
//! retrieval model, min-max normalizes each resulting ranking on its own,
//! and CombSUMs the lot: a document's fused score is the sum of its
//! normalized scores over the rankings that retrieved it.

use std::collections::{BTreeSet, HashMap};

use rayon::prelude::*;
use thiserror::Error;

use crate::retrieval::{
    search_ranking, sort_scored, Index, Ranking, RetrievalError, ScoredDoc, Scorer,
};
use crate::trec_io::{QueryVariation, Run, TopicId, TopicSet, TrecError, DEFAULT_MAX_DEPTH};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FusionError {
    #[error("cannot normalize an empty ranking")]
    EmptyRanking,
    #[error("topic {0}: no source rankings to fuse")]
    NoSources(String),
    #[error("source rankings mix topics {0} and {1}")]
    TopicMismatch(String, String),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error(transparent)]
    Trec(#[from] TrecError),
}

/// Label used for the model and variation fields of fused rankings.
pub const COMBSUM: &str = "CombSUM";

/// A ranking whose scores have been min-max scaled into `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedRanking(Ranking);

impl NormalizedRanking {
    pub fn ranking(&self) -> &Ranking {
        &self.0
    }

    pub fn into_inner(self) -> Ranking {
        self.0
    }
}

/// Rescales scores to `(s − min)/(max − min)`. When every score is equal,
/// each becomes 1.0. Document order is unchanged.
pub fn minmax_normalize(ranking: &Ranking) -> Result<NormalizedRanking, FusionError> {
    let scores: Vec<f64> = ranking.docs.iter().map(|d| d.score).collect();
    let normalized = minmax_scores(&scores).ok_or(FusionError::EmptyRanking)?;
    let docs = ranking
        .docs
        .iter()
        .zip(normalized)
        .map(|(d, s)| ScoredDoc::new(d.doc_id.clone(), s))
        .collect();
    Ok(NormalizedRanking(Ranking {
        docs,
        ..ranking.clone()
    }))
}

/// Min-max scaling of a score list; `None` when the list is empty.
pub fn minmax_scores(scores: &[f64]) -> Option<Vec<f64>> {
    let (min, max) = scores.iter().fold(None, |acc, &s| match acc {
        None => Some((s, s)),
        Some((lo, hi)) => Some((f64::min(lo, s), f64::max(hi, s))),
    })?;
    let range = max - min;
    Some(
        scores
            .iter()
            .map(|&s| {
                if range > 0.0 {
                    ((s - min) / range).clamp(0.0, 1.0)
                } else {
                    1.0
                }
            })
            .collect(),
    )
}

/// Grid that fused sums are rounded to (2^-40, about 9.1e-13).
const SNAP: f64 = (1u64 << 40) as f64;

/// Rounds a fused sum onto a fixed grid so that sums which are equal in
/// exact arithmetic, but differ in their last bits because they add
/// different normalized values, compare equal and fall back to the doc id
/// tie-break.
fn snap(x: f64) -> f64 {
    let scaled = x * SNAP;
    if scaled.abs() < 9.0e15 {
        scaled.round() / SNAP
    } else {
        x
    }
}

/// CombSUM over normalized sources for one topic.
///
/// Absent documents contribute nothing. Each document's contributions are
/// summed in ascending order, so the result does not depend on the order of
/// `sources`; the sum is then rounded to a 2^-40 grid. Output is descending
/// by fused score, ties by ascending doc id, truncated to `depth`.
pub fn combsum(sources: &[NormalizedRanking], depth: usize) -> Result<Ranking, FusionError> {
    let first = sources
        .first()
        .ok_or_else(|| FusionError::NoSources(String::new()))?;
    let topic = &first.0.topic_id;
    if let Some(other) = sources.iter().find(|s| &s.0.topic_id != topic) {
        return Err(FusionError::TopicMismatch(
            topic.to_string(),
            other.0.topic_id.to_string(),
        ));
    }
    let mut contributions: HashMap<&str, Vec<f64>> = HashMap::new();
    for source in sources {
        for d in &source.0.docs {
            contributions
                .entry(d.doc_id.as_str())
                .or_default()
                .push(d.score);
        }
    }
    let mut docs: Vec<ScoredDoc> = contributions
        .into_iter()
        .map(|(doc, mut parts)| {
            parts.sort_by(f64::total_cmp);
            ScoredDoc::new(doc, snap(parts.iter().sum()))
        })
        .collect();
    sort_scored(&mut docs);
    docs.truncate(depth);
    Ok(Ranking {
        topic_id: topic.clone(),
        variation_id: COMBSUM.into(),
        model: COMBSUM.into(),
        docs,
    })
}

/// Depth settings for fusion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FusionConfig {
    /// Depth of each source ranking.
    pub source_depth: usize,
    /// Depth of the fused output.
    pub output_depth: usize,
}

impl Default for FusionConfig {
    fn default() -> Self {
        FusionConfig {
            source_depth: DEFAULT_MAX_DEPTH,
            output_depth: DEFAULT_MAX_DEPTH,
        }
    }
}

/// Outcome of double fusion for one topic.
#[derive(Debug, Clone, PartialEq)]
pub struct DoubleFusion {
    pub ranking: Ranking,
    /// Number of source rankings produced (variations × models, minus skipped).
    pub sources: usize,
    /// Variations skipped because no query terms survived tokenization.
    pub skipped_variations: Vec<String>,
}

/// Searches every (variation, model) pair, normalizes each ranking, and
/// fuses them with CombSUM.
///
/// Variations with no indexable terms are skipped with a warning; the topic
/// fails only if every variation is skipped. Rankings with no matching
/// documents contribute nothing.
pub fn double_fuse<M: Scorer>(
    topic: &TopicId,
    variations: &[QueryVariation],
    models: &[M],
    index: &Index,
    cfg: FusionConfig,
) -> Result<DoubleFusion, FusionError> {
    let mut skipped = Vec::new();
    let usable: Vec<&QueryVariation> = variations
        .iter()
        .filter(|v| {
            let ok = !index.tokenizer().tokenize(&v.text).is_empty();
            if !ok {
                log::warn!(
                    "topic {topic}: variation {} has no query terms; skipped",
                    v.variation_id
                );
                skipped.push(v.variation_id.clone());
            }
            ok
        })
        .collect();
    if usable.is_empty() || models.is_empty() {
        return Err(FusionError::NoSources(topic.to_string()));
    }

    let cells: Vec<(&QueryVariation, &M)> = usable
        .iter()
        .flat_map(|v| models.iter().map(move |m| (*v, m)))
        .collect();
    let rankings: Vec<Ranking> = cells
        .par_iter()
        .map(|(v, m)| search_ranking(index, topic, &v.variation_id, &v.text, *m, cfg.source_depth))
        .collect::<Result<_, _>>()?;

    let sources = rankings.len();
    let normalized: Vec<NormalizedRanking> = rankings
        .iter()
        .filter(|r| !r.is_empty())
        .map(minmax_normalize)
        .collect::<Result<_, _>>()?;
    let ranking = if normalized.is_empty() {
        Ranking {
            topic_id: topic.clone(),
            variation_id: COMBSUM.into(),
            model: COMBSUM.into(),
            docs: Vec::new(),
        }
    } else {
        combsum(&normalized, cfg.output_depth)?
    };
    Ok(DoubleFusion {
        ranking,
        sources,
        skipped_variations: skipped,
    })
}

/// Double fusion over every topic in `topics`, producing one run.
pub fn double_fuse_topics<M: Scorer>(
    topics: &TopicSet,
    models: &[M],
    index: &Index,
    cfg: FusionConfig,
    tag: &str,
) -> Result<Run, FusionError> {
    let topic_list: Vec<_> = topics.iter().collect();
    let fused: Vec<DoubleFusion> = topic_list
        .par_iter()
        .map(|(t, vars)| double_fuse(t, vars, models, index, cfg))
        .collect::<Result<_, _>>()?;
    let mut run = Run::new(tag, cfg.output_depth);
    for f in fused {
        insert_ranking(&mut run, f.ranking)?;
    }
    Ok(run)
}

/// The ranking a run holds for `topic`.
pub fn ranking_from_run(run: &Run, topic: &TopicId) -> Ranking {
    Ranking {
        topic_id: topic.clone(),
        variation_id: String::new(),
        model: run.tag().to_owned(),
        docs: run
            .topic(topic.as_str())
            .iter()
            .map(|e| ScoredDoc::new(e.doc_id.clone(), e.score))
            .collect(),
    }
}

/// Stores a ranking as one topic of `run`, keeping its order.
pub fn insert_ranking(run: &mut Run, ranking: Ranking) -> Result<(), TrecError> {
    run.insert_ordered(
        ranking.topic_id,
        ranking
            .docs
            .into_iter()
            .map(|d| (d.doc_id, d.score))
            .collect(),
    )
}

/// CombSUM across runs loaded from disk, topic by topic. Every run's topic
/// ranking is min-max normalized independently before summation. Topics
/// present in any run appear in the output.
pub fn fuse_runs(runs: &[Run], depth: usize, tag: &str) -> Result<Run, FusionError> {
    if runs.is_empty() {
        return Err(FusionError::NoSources(String::new()));
    }
    let topics: BTreeSet<&TopicId> = runs.iter().flat_map(Run::topic_ids).collect();
    let topics: Vec<&TopicId> = topics.into_iter().collect();
    let fused: Vec<Ranking> = topics
        .par_iter()
        .map(|topic| {
            let sources: Vec<NormalizedRanking> = runs
                .iter()
                .map(|r| ranking_from_run(r, topic))
                .filter(|r| !r.is_empty())
                .map(|r| minmax_normalize(&r))
                .collect::<Result<_, _>>()?;
            if sources.is_empty() {
                return Ok(Ranking {
                    topic_id: (*topic).clone(),
                    variation_id: COMBSUM.into(),
                    model: COMBSUM.into(),
                    docs: Vec::new(),
                });
            }
            combsum(&sources, depth)
        })
        .collect::<Result<_, FusionError>>()?;
    let mut run = Run::new(tag, depth);
    for r in fused {
        insert_ranking(&mut run, r)?;
    }
    Ok(run)
}
