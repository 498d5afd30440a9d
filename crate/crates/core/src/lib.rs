//! Query-variation double fusion and residual-aware offline evaluation.
//!
//! The crate covers the full experimental loop for fusing many query
//! formulations across many retrieval models:
//!
//! - [`trec_io`]: TREC run, qrels, and query-variation file formats.
//! - [`corpus`]: document metadata ingestion and publication-date cleaning.
//! - [`retrieval`]: a small in-memory inverted index with BM25, TF-IDF,
//!   Hiemstra LM, and DPH scorers.
//! - [`fusion`]: min-max normalization, CombSUM, and double fusion over the
//!   variation × model matrix.
//! - [`freshness`]: exponential freshness decay and relevance + freshness
//!   re-ranking.
//! - [`eval`]: rank-biased precision with residuals, precision@k, and
//!   residual-collection filtering.
//! - [`pooling`]: depth-k pooling and judgment coverage.
//! - [`analysis`]: system rankings, rank shifts between judgment sets, IQR
//!   outliers, and plot data export.
//!
//! Every operation is deterministic. Parallel paths (via rayon) merge their
//! results in a fixed order, so outputs do not depend on the thread count.

pub mod analysis;
pub mod corpus;
pub mod eval;
pub mod freshness;
pub mod fusion;
pub mod pooling;
pub mod retrieval;
pub mod trec_io;

pub use analysis::{
    export_curves, iqr_outliers, rank_shift, rank_systems, CurveMode, IqrOutliers, RankShift,
    RankShiftReport, SystemRanking, SystemSummary,
};
pub use corpus::{days_since, ingest_metadata, parse_pub_date, CleaningContext, DocMeta};
pub use eval::{precision_at_k, rbp_eval, residual_filter, EvalConfig, RbpResult, RbpScore};
pub use freshness::{decay, freshness_rerank, DecayParams};
pub use fusion::{combsum, double_fuse, fuse_runs, minmax_normalize, NormalizedRanking};
pub use pooling::{judgment_coverage, pool_runs, Pool};
pub use retrieval::{build_index, search, tokenize, Index, Ranking, ScoredDoc, ScoringModel};
pub use trec_io::{
    parse_qrels, parse_run, parse_topics, write_run, JudgmentSet, Run, RunEntry, TopicId, TopicSet,
};

/// Version of the on-disk formats written by this crate (index files).
pub const FORMAT_VERSION: u32 = 1;
