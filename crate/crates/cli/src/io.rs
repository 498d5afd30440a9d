use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use qvfuse_core::corpus::{ingest_metadata, CleaningContext, DocMeta, MetadataColumns};
use qvfuse_core::trec_io::{parse_qrels, parse_run, parse_topics, JudgmentSet, Run, TopicSet};

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

/// Writes via a temp file in the destination directory, then renames, so a
/// failed invocation never leaves a partial file behind.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut tmp = tempfile::NamedTempFile::new_in(&dir)
        .with_context(|| format!("creating temp file in {}", dir.display()))?;
    tmp.write_all(contents.as_bytes())?;
    tmp.persist(path)
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// Writes to `path` atomically, or to stdout when no path is given.
pub fn emit(path: Option<&Path>, contents: &str) -> Result<()> {
    match path {
        Some(p) => write_atomic(p, contents),
        None => {
            std::io::stdout().write_all(contents.as_bytes())?;
            Ok(())
        }
    }
}

pub fn load_run(path: &Path, max_depth: usize) -> Result<Run> {
    parse_run(&read_text(path)?, max_depth)
        .with_context(|| format!("parsing run {}", path.display()))
}

pub fn load_qrels(path: &Path) -> Result<JudgmentSet> {
    parse_qrels(&read_text(path)?).with_context(|| format!("parsing qrels {}", path.display()))
}

pub fn load_topics(path: &Path) -> Result<TopicSet> {
    parse_topics(&read_text(path)?).with_context(|| format!("parsing topics {}", path.display()))
}

pub fn load_metadata(
    path: &Path,
    ctx: &CleaningContext,
    columns: &MetadataColumns,
) -> Result<Vec<DocMeta>> {
    let file = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let ingest = ingest_metadata(file, ctx, columns)
        .with_context(|| format!("reading metadata {}", path.display()))?;
    if !ingest.duplicates.is_empty() {
        log::warn!(
            "{}: skipped {} rows with repeated doc ids",
            path.display(),
            ingest.duplicates.len()
        );
    }
    Ok(ingest.docs)
}

/// Regular, non-hidden files in `dir`, sorted by name.
pub fn list_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for entry in fs::read_dir(dir).with_context(|| format!("listing {}", dir.display()))? {
        let entry = entry?;
        let hidden = entry.file_name().to_string_lossy().starts_with('.');
        if entry.file_type()?.is_file() && !hidden {
            files.push(entry.path());
        }
    }
    files.sort();
    if files.is_empty() {
        bail!("no run files in {}", dir.display());
    }
    Ok(files)
}

/// Every run file in `dir`. Tags must be unique across files.
pub fn load_run_dir(dir: &Path, max_depth: usize) -> Result<Vec<Run>> {
    let mut runs: Vec<Run> = Vec::new();
    for path in list_files(dir)? {
        let run = load_run(&path, max_depth)?;
        if run.is_empty() {
            log::warn!("{}: empty run skipped", path.display());
            continue;
        }
        if let Some(prev) = runs.iter().find(|r| r.tag() == run.tag()) {
            bail!(
                "{}: run tag {} already used by another file in {}",
                path.display(),
                prev.tag(),
                dir.display()
            );
        }
        runs.push(run);
    }
    Ok(runs)
}

/// One tag per line; blank lines and `#` comments ignored.
pub fn load_tag_list(path: &Path) -> Result<Vec<String>> {
    Ok(read_text(path)?
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_owned)
        .collect())
}
