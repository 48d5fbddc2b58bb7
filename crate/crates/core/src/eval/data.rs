//! BEIR and NegConstraint loaders.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("file not found: {0}")]
    MissingFile(PathBuf),
    #[error("{file}:{line}: {reason}")]
    MalformedRow {
        file: PathBuf,
        line: usize,
        reason: String,
    },
    #[error("query {query_id}: {reason}")]
    SchemaViolation { query_id: String, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn read_file(path: &Path) -> Result<String, DataError> {
    if !path.exists() {
        return Err(DataError::MissingFile(path.to_path_buf()));
    }
    Ok(fs::read_to_string(path)?)
}

fn malformed(path: &Path, line: usize, reason: impl Into<String>) -> DataError {
    DataError::MalformedRow {
        file: path.to_path_buf(),
        line,
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Document {
    pub id: String,
    pub text: String,
}

/// Documents in file order with lookup by id.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Corpus {
    docs: Vec<Document>,
    by_id: HashMap<String, usize>,
}

impl Corpus {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns false (and keeps the old text) when `id` is already present.
    pub fn push(&mut self, id: String, text: String) -> bool {
        if self.by_id.contains_key(&id) {
            return false;
        }
        self.by_id.insert(id.clone(), self.docs.len());
        self.docs.push(Document { id, text });
        true
    }

    pub fn get(&self, id: &str) -> Option<&str> {
        self.by_id.get(id).map(|&i| self.docs[i].text.as_str())
    }

    pub fn contains(&self, id: &str) -> bool {
        self.by_id.contains_key(id)
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Document> {
        self.docs.iter()
    }
}

#[derive(Deserialize)]
struct CorpusRow {
    #[serde(rename = "_id")]
    id: Option<String>,
    #[serde(default)]
    title: Option<String>,
    text: Option<String>,
}

#[derive(Deserialize)]
struct QueryRow {
    #[serde(rename = "_id")]
    id: Option<String>,
    text: Option<String>,
}

fn jsonl_rows<'a, T: Deserialize<'a>>(
    path: &'a Path,
    content: &'a str,
) -> impl Iterator<Item = Result<(usize, T), DataError>> + 'a {
    content
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(move |(i, l)| {
            serde_json::from_str(l)
                .map(|row| (i + 1, row))
                .map_err(|e| malformed(path, i + 1, e.to_string()))
        })
}

/// Corpus JSONL: `{"_id", "title", "text"}`. A non-empty title is prepended
/// to the text with one space.
pub fn load_corpus(path: &Path) -> Result<Corpus, DataError> {
    let content = read_file(path)?;
    let mut corpus = Corpus::new();
    for row in jsonl_rows::<CorpusRow>(path, &content) {
        let (line, row) = row?;
        let id = row.id.ok_or_else(|| malformed(path, line, "missing _id"))?;
        let text = row.text.ok_or_else(|| malformed(path, line, "missing text"))?;
        let text = match row.title.as_deref().map(str::trim) {
            Some(t) if !t.is_empty() => format!("{t} {text}"),
            _ => text,
        };
        if !corpus.push(id.clone(), text) {
            return Err(malformed(path, line, format!("duplicate _id {id}")));
        }
    }
    Ok(corpus)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Query {
    pub id: String,
    pub text: String,
}

/// Queries JSONL: `{"_id", "text"}`.
pub fn load_queries(path: &Path) -> Result<Vec<Query>, DataError> {
    let content = read_file(path)?;
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for row in jsonl_rows::<QueryRow>(path, &content) {
        let (line, row) = row?;
        let id = row.id.ok_or_else(|| malformed(path, line, "missing _id"))?;
        let text = row.text.ok_or_else(|| malformed(path, line, "missing text"))?;
        if !seen.insert(id.clone()) {
            return Err(malformed(path, line, format!("duplicate _id {id}")));
        }
        out.push(Query { id, text });
    }
    Ok(out)
}

/// Relevance judgments, `(query, doc) → grade`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct Qrels {
    judgments: BTreeMap<String, BTreeMap<String, u32>>,
}

impl Qrels {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns false when the pair is already judged.
    pub fn insert(&mut self, qid: &str, doc_id: &str, relevance: u32) -> bool {
        let per_query = self.judgments.entry(qid.to_string()).or_default();
        if per_query.contains_key(doc_id) {
            return false;
        }
        per_query.insert(doc_id.to_string(), relevance);
        true
    }

    pub fn relevance(&self, qid: &str, doc_id: &str) -> u32 {
        self.judgments
            .get(qid)
            .and_then(|m| m.get(doc_id))
            .copied()
            .unwrap_or(0)
    }

    pub fn for_query(&self, qid: &str) -> Option<&BTreeMap<String, u32>> {
        self.judgments.get(qid)
    }

    pub fn query_ids(&self) -> impl Iterator<Item = &str> {
        self.judgments.keys().map(String::as_str)
    }

    /// Number of documents judged relevant (grade > 0) for `qid`.
    pub fn relevant_count(&self, qid: &str) -> usize {
        self.judgments
            .get(qid)
            .map_or(0, |m| m.values().filter(|&&r| r > 0).count())
    }

    pub fn len(&self) -> usize {
        self.judgments.values().map(BTreeMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Qrels TSV. Accepts BEIR rows (`query-id corpus-id score`, optional header)
/// and TREC rows (`qid iter doc rel`).
pub fn load_qrels(path: &Path) -> Result<Qrels, DataError> {
    let content = read_file(path)?;
    let mut qrels = Qrels::new();
    for (i, line) in content.lines().enumerate() {
        let lineno = i + 1;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        if lineno == 1 && fields[0] == "query-id" {
            continue;
        }
        let (qid, did, rel) = match fields.as_slice() {
            [q, d, r] => (*q, *d, *r),
            [q, _, d, r] => (*q, *d, *r),
            _ => {
                return Err(malformed(
                    path,
                    lineno,
                    format!("expected 3 or 4 fields, found {}", fields.len()),
                ))
            }
        };
        let rel: i64 = rel
            .parse()
            .map_err(|_| malformed(path, lineno, format!("relevance {rel:?} is not an integer")))?;
        let rel = u32::try_from(rel)
            .map_err(|_| malformed(path, lineno, format!("relevance {rel} is negative")))?;
        if !qrels.insert(qid, did, rel) {
            return Err(malformed(path, lineno, format!("duplicate judgment ({qid}, {did})")));
        }
    }
    Ok(qrels)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BeirDataset {
    pub corpus: Corpus,
    pub queries: Vec<Query>,
    pub qrels: Qrels,
}

pub fn load_beir(corpus: &Path, queries: &Path, qrels: &Path) -> Result<BeirDataset, DataError> {
    Ok(BeirDataset {
        corpus: load_corpus(corpus)?,
        queries: load_queries(queries)?,
        qrels: load_qrels(qrels)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Formulation {
    #[serde(rename = "A_MINUS_A")]
    AMinusA,
    #[serde(rename = "A_MINUS_A_UNION_B")]
    AMinusAUnionB,
    #[serde(rename = "A_MINUS_A_UNION_B_MINUS_B")]
    AMinusAUnionBMinusB,
}

impl Formulation {
    pub const ALL: [Formulation; 3] = [
        Formulation::AMinusA,
        Formulation::AMinusAUnionB,
        Formulation::AMinusAUnionBMinusB,
    ];

    pub fn negative_count(self) -> usize {
        match self {
            Formulation::AMinusAUnionBMinusB => 3,
            _ => 1,
        }
    }

    pub fn positive_count(self) -> usize {
        1
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Formulation::AMinusA => "A_MINUS_A",
            Formulation::AMinusAUnionB => "A_MINUS_A_UNION_B",
            Formulation::AMinusAUnionBMinusB => "A_MINUS_A_UNION_B_MINUS_B",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NegConstraintItem {
    pub query_id: String,
    pub formulation: Formulation,
    pub query: String,
    pub positive_ids: Vec<String>,
    pub negative_ids: Vec<String>,
}

impl NegConstraintItem {
    pub fn validate(&self) -> Result<(), DataError> {
        let violation = |reason: String| DataError::SchemaViolation {
            query_id: self.query_id.clone(),
            reason,
        };
        let f = self.formulation;
        if self.positive_ids.len() != f.positive_count() {
            return Err(violation(format!(
                "{} expects {} positive, found {}",
                f.as_str(),
                f.positive_count(),
                self.positive_ids.len()
            )));
        }
        if self.negative_ids.len() != f.negative_count() {
            return Err(violation(format!(
                "{} expects {} negatives, found {}",
                f.as_str(),
                f.negative_count(),
                self.negative_ids.len()
            )));
        }
        if let Some(both) = self.positive_ids.iter().find(|p| self.negative_ids.contains(p)) {
            return Err(violation(format!("{both} is both positive and negative")));
        }
        let unique: BTreeSet<_> = self.negative_ids.iter().collect();
        if unique.len() != self.negative_ids.len() {
            return Err(violation("repeated negative id".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NegConstraintSet {
    pub items: Vec<NegConstraintItem>,
    pub corpus: Corpus,
}

impl NegConstraintSet {
    pub fn queries(&self) -> Vec<Query> {
        self.items
            .iter()
            .map(|it| Query {
                id: it.query_id.clone(),
                text: it.query.clone(),
            })
            .collect()
    }

    /// Positives get relevance 1, negatives an explicit 0.
    pub fn qrels(&self) -> Qrels {
        derived_qrels(&self.items)
    }
}

pub fn load_negconstraint_items(path: &Path) -> Result<Vec<NegConstraintItem>, DataError> {
    let content = read_file(path)?;
    let mut seen = BTreeSet::new();
    let mut items = Vec::new();
    for row in jsonl_rows::<NegConstraintItem>(path, &content) {
        let (line, item) = row?;
        item.validate()?;
        if !seen.insert(item.query_id.clone()) {
            return Err(malformed(path, line, format!("duplicate query_id {}", item.query_id)));
        }
        items.push(item);
    }
    Ok(items)
}

/// Loads items and their corpus; every referenced document must exist.
pub fn load_negconstraint(items: &Path, corpus: &Path) -> Result<NegConstraintSet, DataError> {
    let items = load_negconstraint_items(items)?;
    let corpus = load_corpus(corpus)?;
    for item in &items {
        if let Some(missing) = item
            .positive_ids
            .iter()
            .chain(&item.negative_ids)
            .find(|id| !corpus.contains(id))
        {
            return Err(DataError::SchemaViolation {
                query_id: item.query_id.clone(),
                reason: format!("document {missing} is not in the corpus"),
            });
        }
    }
    Ok(NegConstraintSet { items, corpus })
}

pub fn write_negconstraint_items(items: &[NegConstraintItem], path: &Path) -> Result<(), DataError> {
    let mut out = Vec::new();
    for item in items {
        serde_json::to_writer(&mut out, item).expect("item serializes");
        out.push(b'\n');
    }
    fs::File::create(path)?.write_all(&out)?;
    Ok(())
}

pub fn derived_qrels(items: &[NegConstraintItem]) -> Qrels {
    let mut qrels = Qrels::new();
    for item in items {
        for p in &item.positive_ids {
            qrels.insert(&item.query_id, p, 1);
        }
        for n in &item.negative_ids {
            qrels.insert(&item.query_id, n, 0);
        }
    }
    qrels
}
