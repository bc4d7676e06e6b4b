//! JSONL records read and written by the commands.

use std::collections::HashSet;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use anyhow::{bail, Context};
use qefuse::CandidatePool;
use serde::{Deserialize, Serialize};

/// One input line: the serialized form of a [`CandidatePool`].
pub type InputRecord = CandidatePool;

/// A pool with the 1-based line it was read from.
#[derive(Debug, Clone)]
pub struct Numbered<T> {
    pub line: usize,
    pub record: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputRecord {
    pub id: String,
    pub method: String,
    pub output: String,
    pub score: f64,
    pub base_index: usize,
    pub stats: serde_json::Value,
}

/// The fields of an output line that evaluation needs.
#[derive(Debug, Clone, Deserialize)]
pub struct HypRecord {
    pub id: String,
    pub output: String,
}

fn open(path: &Path) -> anyhow::Result<BufReader<File>> {
    let file = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    Ok(BufReader::new(file))
}

/// Parses a JSONL file, skipping blank lines.
fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> anyhow::Result<Vec<Numbered<T>>> {
    let mut out = Vec::new();
    for (i, line) in open(path)?.lines().enumerate() {
        let line_no = i + 1;
        let line = line.with_context(|| format!("{}:{line_no}: read failed", path.display()))?;
        if line.trim().is_empty() {
            continue;
        }
        let record =
            serde_json::from_str(&line).with_context(|| format!("{}:{line_no}: malformed record", path.display()))?;
        out.push(Numbered { line: line_no, record });
    }
    Ok(out)
}

/// Reads candidate pools, rejecting empty pools and repeated ids.
pub fn read_pools(path: &Path) -> anyhow::Result<Vec<Numbered<InputRecord>>> {
    let records: Vec<Numbered<InputRecord>> = read_jsonl(path)?;
    let mut seen = HashSet::new();
    for r in &records {
        if r.record.candidates.is_empty() {
            bail!(
                "{}:{}: record `{}` has no candidates",
                path.display(),
                r.line,
                r.record.id
            );
        }
        if !seen.insert(r.record.id.as_str()) {
            bail!("{}:{}: duplicate id `{}`", path.display(), r.line, r.record.id);
        }
    }
    Ok(records)
}

pub fn read_hypotheses(path: &Path) -> anyhow::Result<Vec<Numbered<HypRecord>>> {
    read_jsonl(path)
}

/// Fails on the first pool without a reference.
pub fn require_references(path: &Path, pools: &[Numbered<InputRecord>], why: &str) -> anyhow::Result<()> {
    if let Some(r) = pools.iter().find(|r| r.record.reference.is_none()) {
        bail!(
            "{}:{}: record `{}` has no reference ({why})",
            path.display(),
            r.line,
            r.record.id
        );
    }
    Ok(())
}

/// A file, or stdout for `None` and `-`.
pub fn create_output(path: Option<&Path>) -> anyhow::Result<Box<dyn Write>> {
    match path {
        Some(p) if p != Path::new("-") => {
            let file = File::create(p).with_context(|| format!("cannot create {}", p.display()))?;
            Ok(Box::new(BufWriter::new(file)))
        }
        _ => Ok(Box::new(BufWriter::new(io::stdout().lock()))),
    }
}

pub fn write_jsonl<T: Serialize>(out: &mut dyn Write, records: &[T]) -> anyhow::Result<()> {
    for r in records {
        serde_json::to_writer(&mut *out, r)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}
