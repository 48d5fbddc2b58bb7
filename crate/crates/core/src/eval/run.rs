//! TREC run files: `qid Q0 doc_id rank score tag`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

pub const RUN_TAG: &str = "nsir";

#[derive(Debug, Error)]
pub enum RunError {
    #[error("run file not found: {0}")]
    MissingFile(PathBuf),
    #[error("malformed run line {line}: {reason}")]
    MalformedRun { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRow {
    pub doc_id: String,
    pub rank: usize,
    pub score: f64,
}

/// Ranked documents per query, best first.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Run {
    rankings: BTreeMap<String, Vec<RunRow>>,
}

impl Run {
    pub fn new() -> Self {
        Self::default()
    }

    /// Sets the ranking of `qid`; ranks are assigned 1.. in the given order.
    pub fn set(&mut self, qid: &str, ranked: Vec<(String, f64)>) {
        let rows = ranked
            .into_iter()
            .enumerate()
            .map(|(i, (doc_id, score))| RunRow {
                doc_id,
                rank: i + 1,
                score,
            })
            .collect();
        self.rankings.insert(qid.to_string(), rows);
    }

    pub fn ranking(&self, qid: &str) -> Option<&[RunRow]> {
        self.rankings.get(qid).map(Vec::as_slice)
    }

    pub fn doc_ids(&self, qid: &str) -> Vec<&str> {
        self.rankings
            .get(qid)
            .map(|rows| rows.iter().map(|r| r.doc_id.as_str()).collect())
            .unwrap_or_default()
    }

    pub fn query_ids(&self) -> impl Iterator<Item = &str> {
        self.rankings.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.rankings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rankings.is_empty()
    }

    /// Serializes queries in the given order, falling back to id order for
    /// anything not listed.
    pub fn to_trec_ordered(&self, order: &[&str], tag: &str) -> String {
        let mut out = String::new();
        let listed: BTreeSet<&str> = order.iter().copied().collect();
        let rest = self.rankings.keys().map(String::as_str).filter(|q| !listed.contains(q));
        for qid in order.iter().copied().chain(rest) {
            if let Some(rows) = self.rankings.get(qid) {
                for r in rows {
                    writeln!(out, "{qid} Q0 {} {} {:.6} {tag}", r.doc_id, r.rank, r.score)
                        .expect("writing to a String");
                }
            }
        }
        out
    }

    pub fn to_trec(&self, tag: &str) -> String {
        self.to_trec_ordered(&[], tag)
    }

    pub fn parse(content: &str) -> Result<Run, RunError> {
        let mut rows: BTreeMap<String, Vec<(usize, usize, RunRow)>> = BTreeMap::new();
        let mut seen: BTreeSet<(String, String)> = BTreeSet::new();
        for (i, line) in content.lines().enumerate() {
            let lineno = i + 1;
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.is_empty() {
                continue;
            }
            let bad = |reason: String| RunError::MalformedRun {
                line: lineno,
                reason,
            };
            if fields.len() != 6 {
                return Err(bad(format!("expected 6 fields, found {}", fields.len())));
            }
            let rank: usize = fields[3]
                .parse()
                .map_err(|_| bad(format!("rank {:?} is not a positive integer", fields[3])))?;
            let score: f64 = fields[4]
                .parse()
                .map_err(|_| bad(format!("score {:?} is not a number", fields[4])))?;
            if !score.is_finite() {
                return Err(bad("score is not finite".into()));
            }
            let (qid, doc) = (fields[0].to_string(), fields[2].to_string());
            if !seen.insert((qid.clone(), doc.clone())) {
                return Err(bad(format!("document {doc} listed twice for query {qid}")));
            }
            rows.entry(qid).or_default().push((
                rank,
                lineno,
                RunRow {
                    doc_id: doc,
                    rank,
                    score,
                },
            ));
        }
        let mut run = Run::new();
        for (qid, mut list) in rows {
            list.sort_by_key(|(rank, line, _)| (*rank, *line));
            run.rankings
                .insert(qid, list.into_iter().map(|(_, _, r)| r).collect());
        }
        Ok(run)
    }

    pub fn load(path: &Path) -> Result<Run, RunError> {
        if !path.exists() {
            return Err(RunError::MissingFile(path.to_path_buf()));
        }
        Run::parse(&fs::read_to_string(path)?)
    }
}
