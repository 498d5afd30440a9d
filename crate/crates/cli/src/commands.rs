use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;

use anyhow::{bail, Context, Result};
use rayon::prelude::*;

use qvfuse_core::analysis::{
    export_curves, rank_shift_with, rank_summaries, CurveMode, OutlierConfig, OutlierSubset,
    SystemRanking, SystemSummary,
};
use qvfuse_core::corpus::{parse_corpus_tsv, CleaningContext, MetadataColumns};
use qvfuse_core::eval::{precision_at_k, rbp_eval, residual_filter, EvalConfig};
use qvfuse_core::freshness::{freshness_rerank, DecayParams};
use qvfuse_core::fusion::{double_fuse_topics, fuse_runs, FusionConfig};
use qvfuse_core::pooling::pool_runs;
use qvfuse_core::retrieval::{build_index, search, Index, RetrievalError, ScoringModel};
use qvfuse_core::trec_io::{write_run, JudgmentSet, Run, TopicId};

use crate::io::{
    emit, load_metadata, load_qrels, load_run, load_run_dir, load_tag_list, load_topics, read_text,
    write_atomic,
};
use crate::{
    AnalyzeCommand, Command, CurveModeArg, CurvesArgs, EvalArgs, FuseArgs, IndexArgs, Measure,
    MeasureArgs, MetadataColumnArgs, ModelArgs, PoolArgs, RankShiftArgs, RerankArgs, SearchArgs,
    Subset,
};

pub fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Index(a) => index(a),
        Command::Search(a) => search_matrix(a),
        Command::Fuse(a) => fuse(a),
        Command::Rerank(a) => rerank(a),
        Command::Eval(a) => eval(a),
        Command::Pool(a) => pool(a),
        Command::Analyze(AnalyzeCommand::RankShift(a)) => analyze_rank_shift(a),
        Command::Analyze(AnalyzeCommand::Curves(a)) => analyze_curves(a),
    }
}

impl MetadataColumnArgs {
    fn columns(&self) -> MetadataColumns {
        MetadataColumns {
            doc_id: self.id_column.clone(),
            title: self.title_column.clone(),
            abstract_text: self.abstract_column.clone(),
            date: self.date_column.clone(),
            body: self.body_column.clone(),
        }
    }
}

impl ModelArgs {
    fn roster(&self) -> Result<Vec<ScoringModel>> {
        let mut models = Vec::new();
        for name in &self.models {
            let model = match name.parse::<ScoringModel>()? {
                ScoringModel::Bm25 { .. } => ScoringModel::Bm25 {
                    k1: self.bm25_k1,
                    b: self.bm25_b,
                },
                ScoringModel::HiemstraLm { .. } => ScoringModel::HiemstraLm {
                    lambda: self.lm_lambda,
                },
                other => other,
            };
            model.validate()?;
            if models.contains(&model) {
                bail!("model {model} listed twice");
            }
            models.push(model);
        }
        if models.is_empty() {
            bail!("no models given");
        }
        Ok(models)
    }
}

impl MeasureArgs {
    fn rbp_config(&self) -> Result<EvalConfig> {
        Ok(EvalConfig::new(self.phi, self.threshold)?)
    }
}

fn load_index(path: &std::path::Path) -> Result<Index> {
    Index::from_json(&read_text(path)?)
        .map_err(anyhow::Error::msg)
        .with_context(|| format!("loading index {}", path.display()))
}

fn index(a: IndexArgs) -> Result<()> {
    let ctx = CleaningContext::new(a.snapshot_date);
    let docs = match (&a.metadata, &a.corpus) {
        (Some(m), _) => load_metadata(m, &ctx, &a.columns.columns())?,
        (None, Some(c)) => parse_corpus_tsv(&read_text(c)?, &ctx)
            .with_context(|| format!("reading corpus {}", c.display()))?,
        (None, None) => bail!("one of --metadata or --corpus is required"),
    };
    let index = build_index(&docs)?;
    log::info!(
        "indexed {} documents, {} terms",
        index.num_docs(),
        index.terms.len()
    );
    write_atomic(&a.out, &index.to_json())
}

fn search_matrix(a: SearchArgs) -> Result<()> {
    let index = load_index(&a.index)?;
    let topics = load_topics(&a.topics)?;
    let models = a.models.roster()?;
    if a.depth == 0 {
        bail!("--depth must be at least 1");
    }

    // one cell per (model, topic, variation); output files group by (model, variation)
    let cells: Vec<(&ScoringModel, &TopicId, &str, &str)> = models
        .iter()
        .flat_map(|m| {
            topics.iter().flat_map(move |(t, vars)| {
                vars.iter()
                    .map(move |v| (m, t, v.variation_id.as_str(), v.text.as_str()))
            })
        })
        .collect();
    let results: Vec<_> = cells
        .par_iter()
        .map(|&(m, t, v, q)| match search(&index, q, m, a.depth) {
            Ok(docs) => Ok(Some(docs)),
            Err(RetrievalError::EmptyQuery(_)) => {
                log::warn!("topic {t} variation {v}: no query terms; skipped");
                Ok(None)
            }
            Err(e) => Err(e),
        })
        .collect::<Result<_, _>>()?;

    let mut runs: BTreeMap<(String, String), Run> = BTreeMap::new();
    for (&(m, t, v, _), docs) in cells.iter().zip(results) {
        let Some(docs) = docs else { continue };
        let key = (m.label().to_owned(), v.to_owned());
        let tag = format!("{}.{}", key.0, key.1);
        let run = runs.entry(key).or_insert_with(|| Run::new(tag, a.depth));
        run.insert_ordered(
            t.clone(),
            docs.into_iter().map(|d| (d.doc_id, d.score)).collect(),
        )?;
    }
    for ((model, variation), run) in &runs {
        let path = a.out_dir.join(format!("{model}.{variation}.run"));
        write_atomic(&path, &write_run(run))?;
    }
    log::info!("wrote {} run files to {}", runs.len(), a.out_dir.display());
    Ok(())
}

fn fuse(a: FuseArgs) -> Result<()> {
    let fused = match (&a.runs, &a.index, &a.topics) {
        (Some(dir), _, _) => {
            let runs = load_run_dir(dir, a.source_depth)?;
            fuse_runs(&runs, a.depth, &a.tag)?
        }
        (None, Some(index), Some(topics)) => {
            let index = load_index(index)?;
            let topics = load_topics(topics)?;
            let models = a.models.roster()?;
            let cfg = FusionConfig {
                source_depth: a.source_depth,
                output_depth: a.depth,
            };
            double_fuse_topics(&topics, &models, &index, cfg, &a.tag)?
        }
        _ => bail!("give --runs, or --index with --topics"),
    };
    write_atomic(&a.out, &write_run(&fused))
}

fn rerank(a: RerankArgs) -> Result<()> {
    let run = load_run(&a.run, a.depth)?;
    let docs = load_metadata(
        &a.metadata,
        &CleaningContext::default(),
        &a.columns.columns(),
    )?;
    let params = DecayParams::new(a.ref_date);
    let mut out = freshness_rerank(&run, &docs, &params);
    if let Some(tag) = a.tag {
        out = out.with_tag(tag);
    }
    write_atomic(&a.out, &write_run(&out))
}

fn judged_topics(qrels: &JudgmentSet) -> Result<Vec<TopicId>> {
    let topics: Vec<TopicId> = qrels.topics().cloned().collect();
    if topics.is_empty() {
        bail!("qrels contain no judgments");
    }
    Ok(topics)
}

fn eval(a: EvalArgs) -> Result<()> {
    let qrels = load_qrels(&a.qrels)?;
    let run = load_run(&a.run, a.measure.depth)?;
    let topics = judged_topics(&qrels)?;
    let mut out = String::new();
    match a.measure.measure {
        Measure::Rbp => {
            let res = rbp_eval(&run, &qrels, &a.measure.rbp_config()?, &topics)?;
            out.push_str("topic,score,residual\n");
            if a.per_topic {
                for (t, s) in &res.per_topic {
                    writeln!(out, "{t},{:.6},{:.6}", s.score, s.residual)?;
                }
            }
            writeln!(out, "mean,{:.6},{:.6}", res.mean_score, res.mean_residual)?;
        }
        Measure::P => {
            let res = precision_at_k(&run, &qrels, a.measure.k, a.measure.threshold, &topics)?;
            writeln!(out, "topic,p@{}", a.measure.k)?;
            if a.per_topic {
                for (t, p) in &res.per_topic {
                    writeln!(out, "{t},{p:.6}")?;
                }
            }
            writeln!(out, "mean,{:.6}", res.mean)?;
        }
    }
    emit(a.out.as_deref(), &out)
}

fn pool(a: PoolArgs) -> Result<()> {
    let mut runs = load_run_dir(&a.runs, a.max_depth)?;
    if let Some(prior) = &a.exclude_qrels {
        let prior = load_qrels(prior)?;
        runs = runs.iter().map(|r| residual_filter(r, &prior)).collect();
    }
    let pool = pool_runs(&runs, a.depth);
    log::info!("pool of {} documents from {} runs", pool.len(), runs.len());
    write_atomic(&a.out, &pool.to_tsv())
}

/// Mean effectiveness of every run under `qrels`, evaluated over `topics`.
fn summarize(
    runs: &[Run],
    qrels: &JudgmentSet,
    topics: &[TopicId],
    m: &MeasureArgs,
    pooled: &HashSet<String>,
) -> Result<Vec<SystemSummary>> {
    let cfg = m.rbp_config()?;
    runs.par_iter()
        .map(|run| {
            let is_pooled = pooled.contains(run.tag());
            Ok(match m.measure {
                Measure::Rbp => {
                    let r = rbp_eval(run, qrels, &cfg, topics)?.with_pooled(is_pooled);
                    SystemSummary::from(&r)
                }
                Measure::P => {
                    let p = precision_at_k(run, qrels, m.k, m.threshold, topics)?;
                    SystemSummary {
                        tag: run.tag().to_owned(),
                        mean_score: p.mean,
                        mean_residual: 0.0,
                        pooled: is_pooled,
                    }
                }
            })
        })
        .collect()
}

fn pooled_tags(path: Option<&std::path::Path>) -> Result<HashSet<String>> {
    Ok(match path {
        Some(p) => load_tag_list(p)?.into_iter().collect(),
        None => HashSet::new(),
    })
}

fn analyze_rank_shift(a: RankShiftArgs) -> Result<()> {
    let runs = load_run_dir(&a.runs, a.measure.depth)?;
    let qrels_a = load_qrels(&a.qrels_a)?;
    let qrels_b = load_qrels(&a.qrels_b)?;
    // both judgment sets are scored over the topics judged in the first
    let topics = judged_topics(&qrels_a)?;
    let pooled = pooled_tags(a.pooled.as_deref())?;

    let rank_a = rank_summaries(summarize(&runs, &qrels_a, &topics, &a.measure, &pooled)?)?;
    let rank_b = rank_summaries(summarize(&runs, &qrels_b, &topics, &a.measure, &pooled)?)?;
    let cfg = OutlierConfig {
        mild: a.mild_multiplier,
        extreme: a.outlier_multiplier,
        subset: match a.subset {
            Subset::All => OutlierSubset::All,
            Subset::Pooled => OutlierSubset::Pooled,
            Subset::Unpooled => OutlierSubset::Unpooled,
        },
    };
    let report = rank_shift_with(&rank_a, &rank_b, &cfg);
    if let Some(f) = &report.extreme {
        eprintln!(
            "rank shift quartiles: Q1 {} Q3 {} IQR {}; extreme fences ({}x) [{}, {}]; {} extreme outliers",
            f.q1,
            f.q3,
            f.iqr,
            f.multiplier,
            f.lower_fence,
            f.upper_fence,
            report.extreme_tags.len()
        );
    }
    emit(a.out.as_deref(), &shift_table(&report, &rank_a, &rank_b))
}

/// Per-system rank, score, and residual under both judgment sets.
fn shift_table(
    report: &qvfuse_core::RankShiftReport,
    a: &SystemRanking,
    b: &SystemRanking,
) -> String {
    let mut out = String::from(
        "tag,rank_a,score_a,residual_a,rank_b,score_b,residual_b,delta,pooled,outlier\n",
    );
    for s in &report.shifts {
        let (Some(ea), Some(eb)) = (a.get(&s.tag), b.get(&s.tag)) else {
            continue;
        };
        let class = if report.is_extreme(&s.tag) {
            "extreme"
        } else if report.is_mild(&s.tag) {
            "mild"
        } else {
            ""
        };
        let _ = writeln!(
            out,
            "{},{},{:.6},{:.6},{},{:.6},{:.6},{},{},{class}",
            s.tag,
            s.rank_a,
            ea.system.mean_score,
            ea.system.mean_residual,
            s.rank_b,
            eb.system.mean_score,
            eb.system.mean_residual,
            s.delta,
            s.pooled
        );
    }
    out
}

fn analyze_curves(a: CurvesArgs) -> Result<()> {
    let runs = load_run_dir(&a.runs, a.depth)?;
    let qrels = load_qrels(&a.qrels)?;
    let topics = judged_topics(&qrels)?;
    let pooled = pooled_tags(a.pooled.as_deref())?;
    let cfg = EvalConfig::new(a.phi, a.threshold)?;
    let evals = runs
        .par_iter()
        .map(
            |run| Ok(rbp_eval(run, &qrels, &cfg, &topics)?.with_pooled(pooled.contains(run.tag()))),
        )
        .collect::<Result<Vec<_>>>()?;
    let mode = match a.mode {
        CurveModeArg::PerSystem => CurveMode::PerSystem,
        CurveModeArg::PerTopic => CurveMode::PerTopic(a.system.clone().unwrap_or_default()),
    };
    emit(a.out.as_deref(), &export_curves(&evals, &mode)?)
}
