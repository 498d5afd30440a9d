//! A minimal in-memory inverted index and four classic scoring models.
//!
//! The scorers follow their published forms:
//!
//! - BM25: `idf · tf(k1+1) / (tf + k1(1 − b + b·dl/avgdl))` with
//!   `idf = max(0, ln((N − df + 0.5)/(df + 0.5)))`.
//! - TF-IDF: Robertson tf `k1·tf / (tf + k1(1 − b + b·dl/avgdl))` times
//!   `ln(N/df + 1)`.
//! - Hiemstra LM: `ln(1 + λ·tf·T / ((1 − λ)·cf·dl))`, `T` the collection
//!   token count.
//! - DPH: the parameter-free hypergeometric DFR model.
//!
//! Each per-term score is multiplied by the term's frequency in the query.
//! There is no stemming, and stopword removal is opt-in via [`Tokenizer`].

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::DocMeta;
use crate::trec_io::TopicId;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RetrievalError {
    #[error("cannot build an index from an empty corpus")]
    EmptyCorpus,
    #[error("document id {0} appears more than once")]
    DuplicateDocId(String),
    #[error("query {0:?} has no terms after tokenization")]
    EmptyQuery(String),
    #[error("search depth must be at least 1")]
    ZeroDepth,
    #[error("unknown scoring model {0:?}")]
    UnknownModel(String),
    #[error("invalid parameter for {model}: {reason}")]
    InvalidParameter { model: &'static str, reason: String },
}

/// Lowercases and splits on runs of non-alphanumeric characters.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Tokenizer {
    stopwords: Option<HashSet<String>>,
}

impl Tokenizer {
    pub fn with_stopwords<I, S>(words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        Tokenizer {
            stopwords: Some(
                words
                    .into_iter()
                    .map(|w| w.as_ref().to_lowercase())
                    .collect(),
            ),
        }
    }

    pub fn tokenize(&self, text: &str) -> Vec<String> {
        text.split(|c: char| !c.is_alphanumeric())
            .filter(|t| !t.is_empty())
            .map(str::to_lowercase)
            .filter(|t| self.stopwords.as_ref().is_none_or(|s| !s.contains(t)))
            .collect()
    }
}

/// Tokenizes with the default configuration (no stopwords).
pub fn tokenize(text: &str) -> Vec<String> {
    Tokenizer::default().tokenize(text)
}

/// Per-term collection statistics.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TermEntry {
    /// Documents containing the term.
    pub df: u64,
    /// Occurrences across the collection.
    pub cf: u64,
    /// `(doc ordinal, term frequency)`, sorted by ordinal.
    pub postings: Vec<(u32, u32)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Index {
    pub format_version: u32,
    pub doc_ids: Vec<String>,
    pub doc_lengths: Vec<u32>,
    pub total_tokens: u64,
    pub avgdl: f64,
    pub terms: BTreeMap<String, TermEntry>,
    #[serde(skip)]
    tokenizer: Tokenizer,
}

impl Index {
    pub fn num_docs(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn term(&self, term: &str) -> Option<&TermEntry> {
        self.terms.get(term)
    }

    pub fn collection_stats(&self) -> CollectionStats {
        CollectionStats {
            num_docs: self.doc_ids.len() as f64,
            avg_doc_len: self.avgdl,
            total_tokens: self.total_tokens as f64,
        }
    }

    pub fn tokenizer(&self) -> &Tokenizer {
        &self.tokenizer
    }

    pub fn set_tokenizer(&mut self, tokenizer: Tokenizer) {
        self.tokenizer = tokenizer;
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("index serializes")
    }

    pub fn from_json(text: &str) -> Result<Index, String> {
        let index: Index = serde_json::from_str(text).map_err(|e| e.to_string())?;
        if index.format_version != crate::FORMAT_VERSION {
            return Err(format!(
                "index format version {} is not supported (expected {})",
                index.format_version,
                crate::FORMAT_VERSION
            ));
        }
        Ok(index)
    }
}

/// Builds an index over the flattened text of each document.
pub fn build_index(docs: &[DocMeta]) -> Result<Index, RetrievalError> {
    build_index_with(
        docs.iter().map(|d| (d.doc_id.clone(), d.text())),
        Tokenizer::default(),
    )
}

/// Builds an index from `(doc_id, text)` pairs.
pub fn build_index_with<I>(docs: I, tokenizer: Tokenizer) -> Result<Index, RetrievalError>
where
    I: IntoIterator<Item = (String, String)>,
{
    let mut doc_ids = Vec::new();
    let mut doc_lengths = Vec::new();
    let mut terms: BTreeMap<String, TermEntry> = BTreeMap::new();
    let mut seen = HashSet::new();
    for (ordinal, (id, text)) in docs.into_iter().enumerate() {
        if !seen.insert(id.clone()) {
            return Err(RetrievalError::DuplicateDocId(id));
        }
        let tokens = tokenizer.tokenize(&text);
        let mut tf: BTreeMap<String, u32> = BTreeMap::new();
        for t in &tokens {
            *tf.entry(t.clone()).or_default() += 1;
        }
        for (term, count) in tf {
            let entry = terms.entry(term).or_default();
            entry.df += 1;
            entry.cf += u64::from(count);
            entry.postings.push((ordinal as u32, count));
        }
        doc_ids.push(id);
        doc_lengths.push(tokens.len() as u32);
    }
    if doc_ids.is_empty() {
        return Err(RetrievalError::EmptyCorpus);
    }
    let total_tokens: u64 = doc_lengths.iter().map(|&l| u64::from(l)).sum();
    Ok(Index {
        format_version: crate::FORMAT_VERSION,
        avgdl: total_tokens as f64 / doc_ids.len() as f64,
        doc_ids,
        doc_lengths,
        total_tokens,
        terms,
        tokenizer,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CollectionStats {
    pub num_docs: f64,
    pub avg_doc_len: f64,
    pub total_tokens: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TermStats {
    pub df: f64,
    pub cf: f64,
}

/// Scorer contract: the contribution of one matching query term to one
/// document's score. `tf ≥ 1` and `tf ≤ doc_len`. Implementations must be
/// deterministic and return finite values; the total document score is the
/// query-frequency weighted sum over matching terms.
pub trait Scorer: Sync {
    fn name(&self) -> String;
    fn score(&self, tf: f64, doc_len: f64, term: TermStats, coll: CollectionStats) -> f64;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScoringModel {
    Bm25 { k1: f64, b: f64 },
    TfIdf { k1: f64, b: f64 },
    HiemstraLm { lambda: f64 },
    Dph,
}

impl ScoringModel {
    pub const BM25: ScoringModel = ScoringModel::Bm25 { k1: 1.2, b: 0.75 };
    pub const TF_IDF: ScoringModel = ScoringModel::TfIdf { k1: 1.2, b: 0.75 };
    pub const HIEMSTRA_LM: ScoringModel = ScoringModel::HiemstraLm { lambda: 0.15 };
    pub const DPH: ScoringModel = ScoringModel::Dph;

    /// The four shipped models with default parameters.
    pub fn roster() -> Vec<ScoringModel> {
        vec![Self::BM25, Self::TF_IDF, Self::HIEMSTRA_LM, Self::DPH]
    }

    pub fn label(&self) -> &'static str {
        match self {
            ScoringModel::Bm25 { .. } => "BM25",
            ScoringModel::TfIdf { .. } => "TF_IDF",
            ScoringModel::HiemstraLm { .. } => "Hiemstra_LM",
            ScoringModel::Dph => "DPH",
        }
    }

    pub fn validate(&self) -> Result<(), RetrievalError> {
        let bad = |reason: String| RetrievalError::InvalidParameter {
            model: self.label(),
            reason,
        };
        match *self {
            ScoringModel::Bm25 { k1, b } | ScoringModel::TfIdf { k1, b } => {
                if !(k1 >= 0.0 && k1.is_finite()) {
                    return Err(bad(format!("k1 = {k1} must be >= 0")));
                }
                if !(0.0..=1.0).contains(&b) {
                    return Err(bad(format!("b = {b} must be in [0, 1]")));
                }
            }
            ScoringModel::HiemstraLm { lambda } => {
                if !(lambda > 0.0 && lambda < 1.0) {
                    return Err(bad(format!("lambda = {lambda} must be in (0, 1)")));
                }
            }
            ScoringModel::Dph => {}
        }
        Ok(())
    }
}

impl fmt::Display for ScoringModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for ScoringModel {
    type Err = RetrievalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "bm25" => Ok(Self::BM25),
            "tfidf" => Ok(Self::TF_IDF),
            "hiemstralm" | "hiemstra" | "lm" => Ok(Self::HIEMSTRA_LM),
            "dph" => Ok(Self::DPH),
            _ => Err(RetrievalError::UnknownModel(s.to_owned())),
        }
    }
}

impl Scorer for ScoringModel {
    fn name(&self) -> String {
        self.label().to_owned()
    }

    fn score(&self, tf: f64, doc_len: f64, term: TermStats, coll: CollectionStats) -> f64 {
        let score = match *self {
            ScoringModel::Bm25 { k1, b } => {
                let idf = ((coll.num_docs - term.df + 0.5) / (term.df + 0.5))
                    .ln()
                    .max(0.0);
                let norm = k1 * (1.0 - b + b * doc_len / coll.avg_doc_len);
                idf * tf * (k1 + 1.0) / (tf + norm)
            }
            ScoringModel::TfIdf { k1, b } => {
                let norm = k1 * (1.0 - b + b * doc_len / coll.avg_doc_len);
                let robertson_tf = k1 * tf / (tf + norm);
                robertson_tf * (coll.num_docs / term.df + 1.0).ln()
            }
            ScoringModel::HiemstraLm { lambda } => {
                (1.0 + lambda * tf * coll.total_tokens / ((1.0 - lambda) * term.cf * doc_len)).ln()
            }
            ScoringModel::Dph => {
                let f = tf / doc_len;
                if f >= 1.0 {
                    return 0.0;
                }
                let norm = (1.0 - f) * (1.0 - f) / (tf + 1.0);
                norm * (tf * ((tf * coll.avg_doc_len / doc_len) * (coll.num_docs / term.cf)).log2()
                    + 0.5 * (2.0 * std::f64::consts::PI * tf * (1.0 - f)).log2())
            }
        };
        if score.is_finite() {
            score
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredDoc {
    pub doc_id: String,
    pub score: f64,
}

impl ScoredDoc {
    pub fn new(doc_id: impl Into<String>, score: f64) -> Self {
        ScoredDoc {
            doc_id: doc_id.into(),
            score,
        }
    }
}

/// One source ranking: a query variation run through one model for one topic.
#[derive(Debug, Clone, PartialEq)]
pub struct Ranking {
    pub topic_id: TopicId,
    pub variation_id: String,
    pub model: String,
    /// Descending by score; ties by ascending doc id.
    pub docs: Vec<ScoredDoc>,
}

impl Ranking {
    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }
}

pub(crate) fn sort_scored(docs: &mut [ScoredDoc]) {
    docs.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then_with(|| a.doc_id.cmp(&b.doc_id))
    });
}

/// Scores every document matching at least one query term and returns the
/// top `depth`, descending by score with ties broken by ascending doc id.
pub fn search(
    index: &Index,
    query: &str,
    model: &dyn Scorer,
    depth: usize,
) -> Result<Vec<ScoredDoc>, RetrievalError> {
    if depth == 0 {
        return Err(RetrievalError::ZeroDepth);
    }
    let tokens = index.tokenizer.tokenize(query);
    if tokens.is_empty() {
        return Err(RetrievalError::EmptyQuery(query.to_owned()));
    }
    let mut qtf: BTreeMap<&str, u32> = BTreeMap::new();
    for t in &tokens {
        *qtf.entry(t.as_str()).or_default() += 1;
    }
    let coll = index.collection_stats();
    let mut acc: HashMap<u32, f64> = HashMap::new();
    for (term, weight) in qtf {
        let Some(entry) = index.terms.get(term) else {
            continue;
        };
        let stats = TermStats {
            df: entry.df as f64,
            cf: entry.cf as f64,
        };
        for &(doc, tf) in &entry.postings {
            let dl = f64::from(index.doc_lengths[doc as usize]);
            let s = f64::from(weight) * model.score(f64::from(tf), dl, stats, coll);
            *acc.entry(doc).or_insert(0.0) += s;
        }
    }
    let mut docs: Vec<ScoredDoc> = acc
        .into_iter()
        .map(|(doc, score)| ScoredDoc::new(index.doc_ids[doc as usize].clone(), score))
        .collect();
    sort_scored(&mut docs);
    docs.truncate(depth);
    Ok(docs)
}

/// [`search`], wrapped into a [`Ranking`] for one (topic, variation, model) cell.
pub fn search_ranking(
    index: &Index,
    topic: &TopicId,
    variation_id: &str,
    query: &str,
    model: &dyn Scorer,
    depth: usize,
) -> Result<Ranking, RetrievalError> {
    Ok(Ranking {
        topic_id: topic.clone(),
        variation_id: variation_id.to_owned(),
        model: model.name(),
        docs: search(index, query, model, depth)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn index_of(docs: &[(&str, &str)]) -> Index {
        build_index_with(
            docs.iter().map(|(i, t)| (i.to_string(), t.to_string())),
            Tokenizer::default(),
        )
        .unwrap()
    }

    #[test]
    fn tokenizer_rules() {
        assert_eq!(
            tokenize("Coronavirus, response to Weather!"),
            ["coronavirus", "response", "to", "weather"]
        );
        assert!(tokenize("").is_empty());
        assert_eq!(tokenize("COVID-19"), ["covid", "19"]);
        let t = Tokenizer::with_stopwords(["To"]);
        assert_eq!(t.tokenize("response to weather"), ["response", "weather"]);
    }

    #[test]
    fn index_statistics() {
        let idx = index_of(&[("d1", "a b"), ("d2", "b")]);
        assert_eq!(idx.num_docs(), 2);
        assert_eq!(idx.avgdl, 1.5);
        assert_eq!(idx.term("b").unwrap().df, 2);
        assert_eq!(idx.term("a").unwrap().df, 1);
        assert_eq!(idx.term("b").unwrap().postings, [(0, 1), (1, 1)]);
    }

    #[test]
    fn empty_text_document() {
        let idx = index_of(&[("d1", "")]);
        assert_eq!(idx.num_docs(), 1);
        assert_eq!(idx.doc_lengths, [0]);
        assert!(idx.terms.is_empty());
    }

    #[test]
    fn index_errors() {
        let none: Vec<(String, String)> = vec![];
        assert_eq!(
            build_index_with(none, Tokenizer::default()).unwrap_err(),
            RetrievalError::EmptyCorpus
        );
        assert_eq!(
            build_index_with(
                vec![
                    ("d".to_string(), "x".to_string()),
                    ("d".to_string(), "y".to_string())
                ],
                Tokenizer::default()
            )
            .unwrap_err(),
            RetrievalError::DuplicateDocId("d".into())
        );
    }

    #[test]
    fn only_matching_documents_returned() {
        let idx = index_of(&[("d1", "coronavirus weather"), ("d2", "humidity")]);
        for model in ScoringModel::roster() {
            let hits = search(&idx, "weather", &model, 10).unwrap();
            let ids: Vec<_> = hits.iter().map(|d| d.doc_id.as_str()).collect();
            assert_eq!(ids, ["d1"], "{model}");
        }
    }

    #[test]
    fn bm25_prefers_document_matching_both_terms() {
        // In a two-document corpus both idfs floor to zero, so the order
        // comes from the doc id tie-break.
        let idx = index_of(&[("d1", "coronavirus weather"), ("d2", "coronavirus")]);
        let hits = search(&idx, "coronavirus weather", &ScoringModel::BM25, 10).unwrap();
        assert_eq!(hits[0].doc_id, "d1");
        assert_eq!(hits[1].doc_id, "d2");

        // With filler documents the idfs are positive and d1 wins on score.
        let idx = index_of(&[
            ("d2", "coronavirus weather"),
            ("d1", "coronavirus"),
            ("d3", "humidity"),
            ("d4", "vaccine"),
            ("d5", "masks"),
        ]);
        let hits = search(&idx, "coronavirus weather", &ScoringModel::BM25, 10).unwrap();
        assert_eq!(hits[0].doc_id, "d2");
        assert!(hits[0].score > hits[1].score);
        // hand evaluation: N=5, avgdl=6/5, dl(d2)=2
        let idf_c = (3.5f64 / 2.5).ln();
        let idf_w = (4.5f64 / 1.5).ln();
        let k = 1.2 * (0.25 + 0.75 * 2.0 / 1.2);
        let expected = idf_c * 2.2 / (1.0 + k) + idf_w * 2.2 / (1.0 + k);
        assert!((hits[0].score - expected).abs() < 1e-12);
    }

    #[test]
    fn depth_caps_results() {
        let idx = index_of(&[
            ("a", "x"),
            ("b", "x x"),
            ("c", "x y"),
            ("d", "x"),
            ("e", "x z"),
        ]);
        assert_eq!(
            search(&idx, "x", &ScoringModel::TF_IDF, 3).unwrap().len(),
            3
        );
    }

    #[test]
    fn empty_query_is_an_error() {
        let idx = index_of(&[("a", "x")]);
        assert!(matches!(
            search(&idx, " ,;", &ScoringModel::BM25, 3),
            Err(RetrievalError::EmptyQuery(_))
        ));
        assert!(search(&idx, "unseen", &ScoringModel::BM25, 3)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn dph_full_document_match_is_zero_not_nan() {
        let idx = index_of(&[("a", "x"), ("b", "y z")]);
        let hits = search(&idx, "x", &ScoringModel::DPH, 3).unwrap();
        assert_eq!(hits[0].score, 0.0);
    }

    #[test]
    fn model_names_and_validation() {
        assert_eq!("bm25".parse::<ScoringModel>().unwrap(), ScoringModel::BM25);
        assert_eq!(
            "Hiemstra_LM".parse::<ScoringModel>().unwrap(),
            ScoringModel::HIEMSTRA_LM
        );
        assert!("PL2".parse::<ScoringModel>().is_err());
        assert!(ScoringModel::Bm25 { k1: 1.2, b: 1.5 }.validate().is_err());
        assert!(ScoringModel::HiemstraLm { lambda: 1.0 }.validate().is_err());
        for m in ScoringModel::roster() {
            m.validate().unwrap();
        }
    }

    #[test]
    fn index_json_round_trip() {
        let idx = index_of(&[("d1", "a b"), ("d2", "b")]);
        let back = Index::from_json(&idx.to_json()).unwrap();
        assert_eq!(back, idx);
    }

    #[test]
    fn repeated_searches_are_identical() {
        let idx = index_of(&[("a", "x y"), ("b", "x"), ("c", "y y x"), ("d", "y")]);
        for m in ScoringModel::roster() {
            let first = search(&idx, "x y", &m, 10).unwrap();
            for _ in 0..5 {
                assert_eq!(search(&idx, "x y", &m, 10).unwrap(), first);
            }
        }
    }

    proptest! {
        #[test]
        fn extra_occurrence_never_lowers_score(
            tf in 1u32..50,
            extra_len in 0u32..200,
            df in 1u32..1000,
            extra_docs in 0u32..10_000,
            cf_extra in 0u32..10_000,
            avgdl in 1.0f64..500.0,
        ) {
            let dl = f64::from(tf + extra_len);
            let n = f64::from(df + extra_docs);
            let coll = CollectionStats { num_docs: n, avg_doc_len: avgdl, total_tokens: n * avgdl + 1e4 };
            let term = TermStats { df: f64::from(df), cf: f64::from(tf + cf_extra) };
            let t = f64::from(tf);
            for m in [ScoringModel::BM25, ScoringModel::TF_IDF, ScoringModel::HIEMSTRA_LM] {
                let base = m.score(t, dl, term, coll);
                // only tf changes
                prop_assert!(m.score(t + 1.0, dl, term, coll) >= base, "{}", m);
                // tf and document length both grow by one
                prop_assert!(m.score(t + 1.0, dl + 1.0, term, coll) >= base - 1e-12, "{}", m);
            }
        }
    }
}
