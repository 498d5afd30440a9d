//! Document metadata ingestion and publication-date cleaning.
//!
//! Dates in the source metadata are messy. Cleaning rules, applied in order:
//!
//! 1. the exact string `2020-12-31` (a placeholder for "published in the
//!    future") becomes `2019-12-31`;
//! 2. a bare year `Y` becomes `Y-01-01`;
//! 3. an empty string becomes `2020-01-01`;
//! 4. anything else must be `Y-m-d` and is taken literally.
//!
//! Other future dates are kept; [`days_since`] clamps them to zero days.

use std::collections::HashSet;
use std::io::Read;

use chrono::NaiveDate;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("unparseable publication date {raw:?}")]
    UnparseableDate { raw: String },
    #[error("row {row}: unparseable publication date {raw:?}")]
    UnparseableDateAt { row: usize, raw: String },
    #[error("missing column {0:?} in metadata header")]
    MissingColumn(String),
    #[error("line {line}: malformed corpus record: {reason}")]
    MalformedRecord { line: usize, reason: String },
    #[error("metadata CSV: {0}")]
    Csv(#[from] csv::Error),
}

/// Date of the first-round corpus snapshot.
pub fn default_snapshot_date() -> NaiveDate {
    NaiveDate::from_ymd_opt(2020, 4, 10).expect("valid date")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CleaningContext {
    /// Date of the corpus snapshot.
    pub today: NaiveDate,
}

impl CleaningContext {
    pub fn new(today: NaiveDate) -> Self {
        CleaningContext { today }
    }
}

impl Default for CleaningContext {
    fn default() -> Self {
        CleaningContext::new(default_snapshot_date())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DocMeta {
    pub doc_id: String,
    pub title: String,
    pub abstract_text: String,
    /// Full text; empty for abstract-only records.
    pub body_text: String,
    pub raw_date: String,
    pub pub_date: NaiveDate,
}

impl DocMeta {
    /// Indexable text: non-empty title, abstract, and body joined by single spaces.
    pub fn text(&self) -> String {
        [&self.title, &self.abstract_text, &self.body_text]
            .into_iter()
            .map(|s| s.trim())
            .filter(|s| !s.is_empty())
            .collect::<Vec<_>>()
            .join(" ")
    }
}

/// Cleans a raw publication date string.
pub fn parse_pub_date(raw: &str, _ctx: &CleaningContext) -> Result<NaiveDate, CorpusError> {
    let s = raw.trim();
    let ymd = |y, m, d| NaiveDate::from_ymd_opt(y, m, d).expect("valid date");
    if s == "2020-12-31" {
        return Ok(ymd(2019, 12, 31));
    }
    if s.is_empty() {
        return Ok(ymd(2020, 1, 1));
    }
    let unparseable = || CorpusError::UnparseableDate {
        raw: raw.to_owned(),
    };
    if s.len() == 4 && s.bytes().all(|b| b.is_ascii_digit()) {
        let year: i32 = s.parse().map_err(|_| unparseable())?;
        return NaiveDate::from_ymd_opt(year, 1, 1).ok_or_else(unparseable);
    }
    let parts: Vec<&str> = s.split('-').collect();
    let well_formed = parts.len() == 3
        && parts[0].len() == 4
        && (1..=2).contains(&parts[1].len())
        && (1..=2).contains(&parts[2].len())
        && parts.iter().all(|p| p.bytes().all(|b| b.is_ascii_digit()));
    if !well_formed {
        return Err(unparseable());
    }
    let (y, m, d) = (
        parts[0].parse().map_err(|_| unparseable())?,
        parts[1].parse().map_err(|_| unparseable())?,
        parts[2].parse().map_err(|_| unparseable())?,
    );
    NaiveDate::from_ymd_opt(y, m, d).ok_or_else(unparseable)
}

/// Whole days from `published` to `reference`, clamped at zero.
pub fn days_since(published: NaiveDate, reference: NaiveDate) -> u32 {
    let days = (reference - published).num_days();
    u32::try_from(days.max(0)).unwrap_or(u32::MAX)
}

/// Column names to read from the metadata CSV.
#[derive(Debug, Clone)]
pub struct MetadataColumns {
    pub doc_id: String,
    pub title: String,
    pub abstract_text: String,
    pub date: String,
    /// Optional full-text column; absent in the stock metadata file.
    pub body: Option<String>,
}

impl Default for MetadataColumns {
    fn default() -> Self {
        MetadataColumns {
            doc_id: "cord_uid".into(),
            title: "title".into(),
            abstract_text: "abstract".into(),
            date: "publish_time".into(),
            body: None,
        }
    }
}

/// Result of metadata ingestion.
#[derive(Debug, Clone, Default)]
pub struct MetadataIngest {
    pub docs: Vec<DocMeta>,
    /// `(row, doc_id)` for every row skipped as a repeat of an earlier doc id.
    pub duplicates: Vec<(usize, String)>,
}

/// Reads the metadata CSV, cleaning each row's publication date.
///
/// Rows are numbered from 1 (the header is not counted). Repeated doc ids
/// keep their first occurrence; later rows are reported in `duplicates` and
/// logged.
pub fn ingest_metadata<R: Read>(
    reader: R,
    ctx: &CleaningContext,
    columns: &MetadataColumns,
) -> Result<MetadataIngest, CorpusError> {
    let mut rdr = csv::ReaderBuilder::new()
        .flexible(false)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| CorpusError::MissingColumn(name.to_owned()))
    };
    let id_col = find(&columns.doc_id)?;
    let title_col = find(&columns.title)?;
    let abstract_col = find(&columns.abstract_text)?;
    let date_col = find(&columns.date)?;
    let body_col = columns.body.as_deref().map(find).transpose()?;

    let mut out = MetadataIngest::default();
    let mut seen = HashSet::new();
    for (i, record) in rdr.records().enumerate() {
        let row = i + 1;
        let record = record?;
        let get = |c: usize| record.get(c).unwrap_or("").to_owned();
        let doc_id = get(id_col).trim().to_owned();
        if !seen.insert(doc_id.clone()) {
            log::warn!("metadata row {row}: duplicate doc id {doc_id}; keeping first occurrence");
            out.duplicates.push((row, doc_id));
            continue;
        }
        let raw_date = get(date_col);
        let pub_date =
            parse_pub_date(&raw_date, ctx).map_err(|_| CorpusError::UnparseableDateAt {
                row,
                raw: raw_date.clone(),
            })?;
        out.docs.push(DocMeta {
            doc_id,
            title: get(title_col),
            abstract_text: get(abstract_col),
            body_text: body_col.map(get).unwrap_or_default(),
            raw_date,
            pub_date,
        });
    }
    Ok(out)
}

/// Reads `doc_id<TAB>text` records. Such records carry no date, so each
/// gets the empty-date default.
pub fn parse_corpus_tsv(text: &str, ctx: &CleaningContext) -> Result<Vec<DocMeta>, CorpusError> {
    let pub_date = parse_pub_date("", ctx)?;
    let mut docs = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (id, body) = line
            .split_once('\t')
            .ok_or_else(|| CorpusError::MalformedRecord {
                line: i + 1,
                reason: "expected doc_id<TAB>text".into(),
            })?;
        if id.trim().is_empty() {
            return Err(CorpusError::MalformedRecord {
                line: i + 1,
                reason: "empty doc id".into(),
            });
        }
        docs.push(DocMeta {
            doc_id: id.trim().to_owned(),
            title: String::new(),
            abstract_text: String::new(),
            body_text: body.to_owned(),
            raw_date: String::new(),
            pub_date,
        });
    }
    Ok(docs)
}
