//! First-stage retrieval followed by logic-aware reranking.

use std::cmp::Ordering;
use std::collections::HashSet;

use ndarray::Array2;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::connective::{assign_sigma, attend, score2, AttentionResult, ConnectiveError, SigmaMatrix};
use crate::embedding::{EmbedError, EmbeddingProvider, EncodedText, Side};
use crate::eval::{Corpus, Query, Run};
use crate::fol::{tokenize_fol, FolError};
use crate::linalg::normalized;
use crate::logic_align::{fuse_cls, score1, AlignError, FusedVector, MIN_FUSED_NORM};
use crate::ot::{build_cost_matrix, solve_ot, AlignmentPlan, OtError, TransportProblem};
use crate::translate::{FolTranslator, TextKind, TranslateError};

pub const DEFAULT_K: usize = 100;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("the index is empty")]
    EmptyIndex,
    #[error("K must be at least 1")]
    InvalidK,
    #[error("invalid index: {0}")]
    InvalidIndex(String),
    #[error("document {0} is not in the corpus")]
    UnknownDocument(String),
    #[error("query encoding failed: {0}")]
    QueryEncoding(#[source] EmbedError),
    #[error(transparent)]
    Translate(#[from] TranslateError),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Fol(#[from] FolError),
    #[error(transparent)]
    Ot(#[from] OtError),
    #[error(transparent)]
    Align(#[from] AlignError),
    #[error(transparent)]
    Connective(#[from] ConnectiveError),
    #[error("FOL text has {tokens} tokens but its embedding has {rows} rows")]
    TokenCountMismatch { tokens: usize, rows: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IndexEntry {
    pub doc_id: String,
    pub cls: Vec<f64>,
    /// Position of the document in its corpus.
    pub position: usize,
}

/// First-stage vectors for every document.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CorpusIndex {
    entries: Vec<IndexEntry>,
    dim: usize,
}

impl CorpusIndex {
    pub fn new(entries: Vec<IndexEntry>) -> Result<Self, PipelineError> {
        let dim = entries.first().map_or(0, |e| e.cls.len());
        let mut seen = HashSet::new();
        for e in &entries {
            if !seen.insert(e.doc_id.as_str()) {
                return Err(PipelineError::InvalidIndex(format!("duplicate doc_id {}", e.doc_id)));
            }
            if e.cls.len() != dim {
                return Err(PipelineError::InvalidIndex(format!(
                    "{} has a {}-d vector, expected {dim}",
                    e.doc_id,
                    e.cls.len()
                )));
            }
        }
        Ok(CorpusIndex { entries, dim })
    }

    /// Encodes every corpus text and keeps its CLS vector.
    pub fn build(corpus: &Corpus, provider: &dyn EmbeddingProvider) -> Result<Self, PipelineError> {
        if corpus.is_empty() {
            return Ok(CorpusIndex::default());
        }
        let texts: Vec<&str> = corpus.iter().map(|d| d.text.as_str()).collect();
        let encoded = provider.batch_encode(&texts, Side::Nl)?;
        let entries = corpus
            .iter()
            .zip(encoded)
            .enumerate()
            .map(|(position, (doc, enc))| IndexEntry {
                doc_id: doc.id.clone(),
                cls: enc.cls,
                position,
            })
            .collect();
        CorpusIndex::new(entries)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[IndexEntry] {
        &self.entries
    }
}

/// Top-`k` documents by inner product, ties broken by ascending doc_id.
pub fn first_stage_retrieve(
    query_cls: &[f64],
    index: &CorpusIndex,
    k: usize,
) -> Result<Vec<(String, f64)>, PipelineError> {
    if k == 0 {
        return Err(PipelineError::InvalidK);
    }
    if index.is_empty() {
        return Err(PipelineError::EmptyIndex);
    }
    if query_cls.len() != index.dim() {
        return Err(EmbedError::DimensionMismatch {
            expected: index.dim(),
            got: query_cls.len(),
        }
        .into());
    }
    let mut scored: Vec<(&str, f64)> = index
        .entries
        .iter()
        .map(|e| (e.doc_id.as_str(), crate::linalg::dot(query_cls, &e.cls)))
        .collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    scored.truncate(k);
    Ok(scored.into_iter().map(|(d, s)| (d.to_string(), s)).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScoringOptions {
    /// Attention scale; `None` means the embedding dimension.
    pub d_k: Option<usize>,
    pub normalize: bool,
    pub weights: (f64, f64),
    /// Prepends the CLS vector to the NL token matrix.
    pub include_cls_row: bool,
}

impl Default for ScoringOptions {
    fn default() -> Self {
        ScoringOptions {
            d_k: None,
            normalize: true,
            weights: (1.0, 1.0),
            include_cls_row: false,
        }
    }
}

/// Everything computed for one NL/FOL pair.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SideAnalysis {
    pub nl_tokens: Vec<String>,
    pub fol_tokens: Vec<String>,
    pub fol_text: String,
    pub cost: Array2<f64>,
    pub plan: AlignmentPlan,
    pub sigma: SigmaMatrix,
    pub fused: FusedVector,
    pub attention: AttentionResult,
    /// Pooled attention output, normalized when the options say so.
    pub pooled: Vec<f64>,
}

pub fn analyze_side(
    nl: &EncodedText,
    fol_text: &str,
    fol: &EncodedText,
    opts: &ScoringOptions,
) -> Result<SideAnalysis, PipelineError> {
    let seq = tokenize_fol(fol_text)?;
    if seq.len() != fol.token_matrix.rows() {
        return Err(PipelineError::TokenCountMismatch {
            tokens: seq.len(),
            rows: fol.token_matrix.rows(),
        });
    }
    let (h, nl_tokens) = if opts.include_cls_row {
        let mut labels = vec!["[CLS]".to_string()];
        labels.extend(nl.surface_tokens.iter().cloned());
        (nl.token_matrix.with_leading_row(&nl.cls)?, labels)
    } else {
        (nl.token_matrix.clone(), nl.surface_tokens.clone())
    };
    let z = &fol.token_matrix;

    let cost = build_cost_matrix(&h, z)?;
    let plan = solve_ot(&TransportProblem::uniform(cost.clone())?)?;
    let fused = fuse_cls(&h, &plan.plan, z, &nl.cls, opts.normalize)?;
    let sigma = assign_sigma(&seq, &plan.zero_mask)?;
    let attention = attend(&h, z, &sigma, opts.d_k.unwrap_or(h.dim()))?;
    let pooled = if opts.normalize {
        normalized(&attention.pooled, MIN_FUSED_NORM).ok_or_else(|| {
            AlignError::DegenerateFusion(crate::linalg::l2_norm(&attention.pooled))
        })?
    } else {
        attention.pooled.clone()
    };
    Ok(SideAnalysis {
        nl_tokens,
        fol_tokens: fol.surface_tokens.clone(),
        fol_text: fol_text.to_string(),
        cost,
        plan,
        sigma,
        fused,
        attention,
        pooled,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoreBreakdown {
    pub doc_id: String,
    pub first_stage: f64,
    pub score1: Option<f64>,
    pub score2: Option<f64>,
    pub combined: f64,
    pub fallback_used: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fallback_reason: Option<String>,
}

impl ScoreBreakdown {
    fn fallback(doc_id: &str, first_stage: f64, reason: String) -> Self {
        ScoreBreakdown {
            doc_id: doc_id.to_string(),
            first_stage,
            score1: None,
            score2: None,
            combined: first_stage,
            fallback_used: true,
            fallback_reason: Some(reason),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RerankResult {
    pub rows: Vec<ScoreBreakdown>,
    /// Set when the query itself could not be analyzed; rows then keep
    /// first-stage order.
    pub query_fallback: Option<String>,
}

/// Combined score descending, then first-stage descending, then doc_id.
pub fn rank_order(a: &ScoreBreakdown, b: &ScoreBreakdown) -> Ordering {
    b.combined
        .total_cmp(&a.combined)
        .then_with(|| b.first_stage.total_cmp(&a.first_stage))
        .then_with(|| a.doc_id.cmp(&b.doc_id))
}

/// Scores of one query/document pair with both side analyses.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairAnalysis {
    pub query: SideAnalysis,
    pub doc: SideAnalysis,
    pub score1: f64,
    pub score2: f64,
    pub combined: f64,
}

pub struct Reranker<'a> {
    translator: &'a dyn FolTranslator,
    provider: &'a dyn EmbeddingProvider,
    corpus: &'a Corpus,
    options: ScoringOptions,
    pool: rayon::ThreadPool,
}

impl<'a> Reranker<'a> {
    /// `threads = 0` uses one worker per available core.
    pub fn new(
        translator: &'a dyn FolTranslator,
        provider: &'a dyn EmbeddingProvider,
        corpus: &'a Corpus,
        options: ScoringOptions,
        threads: usize,
    ) -> Self {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .expect("thread pool");
        Reranker {
            translator,
            provider,
            corpus,
            options,
            pool,
        }
    }

    pub fn options(&self) -> &ScoringOptions {
        &self.options
    }

    pub fn analyze_text(&self, text: &str, kind: TextKind) -> Result<SideAnalysis, PipelineError> {
        let record = self.translator.translate(text, kind)?;
        let nl = self.provider.encode(text, Side::Nl)?;
        let fol = self.provider.encode(&record.fol_text, Side::Fol)?;
        analyze_side(&nl, &record.fol_text, &fol, &self.options)
    }

    fn doc_text(&self, doc_id: &str) -> Result<&'a str, PipelineError> {
        self.corpus
            .get(doc_id)
            .ok_or_else(|| PipelineError::UnknownDocument(doc_id.to_string()))
    }

    fn pair_scores(&self, q: &SideAnalysis, d: &SideAnalysis) -> Result<(f64, f64, f64), PipelineError> {
        let s1 = score1(&q.fused, &d.fused)?;
        let s2 = score2(&q.pooled, &d.pooled)?;
        let (w1, w2) = self.options.weights;
        Ok((s1, s2, w1 * s1 + w2 * s2))
    }

    pub fn analyze_pair(&self, query: &str, doc_id: &str) -> Result<PairAnalysis, PipelineError> {
        let q = self.analyze_text(query, TextKind::Query)?;
        let d = self.analyze_text(self.doc_text(doc_id)?, TextKind::Document)?;
        let (score1, score2, combined) = self.pair_scores(&q, &d)?;
        Ok(PairAnalysis {
            query: q,
            doc: d,
            score1,
            score2,
            combined,
        })
    }

    /// Reranks first-stage candidates. Per-document failures fall back to
    /// the first-stage score; an unknown doc_id is an error.
    pub fn rerank(&self, query: &str, candidates: &[(String, f64)]) -> Result<RerankResult, PipelineError> {
        let texts: Vec<&str> = candidates
            .iter()
            .map(|(id, _)| self.doc_text(id))
            .collect::<Result<_, _>>()?;

        let q = match self.analyze_text(query, TextKind::Query) {
            Ok(q) => q,
            Err(e) => {
                log::warn!("query-level fallback: {e}");
                let reason = e.to_string();
                let rows = candidates
                    .iter()
                    .map(|(id, s)| ScoreBreakdown::fallback(id, *s, reason.clone()))
                    .collect();
                return Ok(RerankResult {
                    rows,
                    query_fallback: Some(reason),
                });
            }
        };

        let mut rows: Vec<ScoreBreakdown> = self.pool.install(|| {
            candidates
                .par_iter()
                .zip(texts.par_iter())
                .map(|((id, first), text)| {
                    let scored = self
                        .analyze_text(text, TextKind::Document)
                        .and_then(|d| self.pair_scores(&q, &d));
                    match scored {
                        Ok((s1, s2, combined)) => ScoreBreakdown {
                            doc_id: id.clone(),
                            first_stage: *first,
                            score1: Some(s1),
                            score2: Some(s2),
                            combined,
                            fallback_used: false,
                            fallback_reason: None,
                        },
                        Err(e) => {
                            log::warn!("document {id} falls back to first stage: {e}");
                            ScoreBreakdown::fallback(id, *first, e.to_string())
                        }
                    }
                })
                .collect()
        });
        rows.sort_by(rank_order);
        Ok(RerankResult {
            rows,
            query_fallback: None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QueryOutcome {
    pub query_id: String,
    pub first_stage: Vec<(String, f64)>,
    pub reranked: RerankResult,
}

/// Retrieves and reranks every query, returning the run and per-query detail.
pub fn run_query_set(
    queries: &[Query],
    index: &CorpusIndex,
    k: usize,
    reranker: &Reranker<'_>,
) -> Result<(Run, Vec<QueryOutcome>), PipelineError> {
    let mut run = Run::new();
    let mut outcomes = Vec::with_capacity(queries.len());
    for q in queries {
        let enc = reranker
            .provider
            .encode(&q.text, Side::Nl)
            .map_err(PipelineError::QueryEncoding)?;
        let first_stage = first_stage_retrieve(&enc.cls, index, k)?;
        let reranked = reranker.rerank(&q.text, &first_stage)?;
        run.set(
            &q.id,
            reranked
                .rows
                .iter()
                .map(|r| (r.doc_id.clone(), r.combined))
                .collect(),
        );
        outcomes.push(QueryOutcome {
            query_id: q.id.clone(),
            first_stage,
            reranked,
        });
    }
    Ok((run, outcomes))
}

/// First-stage-only run, for baselines.
pub fn run_first_stage(
    queries: &[Query],
    index: &CorpusIndex,
    k: usize,
    provider: &dyn EmbeddingProvider,
) -> Result<Run, PipelineError> {
    let mut run = Run::new();
    for q in queries {
        let enc = provider.encode(&q.text, Side::Nl).map_err(PipelineError::QueryEncoding)?;
        run.set(&q.id, first_stage_retrieve(&enc.cls, index, k)?);
    }
    Ok(run)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn index(vectors: &[(&str, Vec<f64>)]) -> CorpusIndex {
        CorpusIndex::new(
            vectors
                .iter()
                .enumerate()
                .map(|(position, (id, v))| IndexEntry {
                    doc_id: id.to_string(),
                    cls: v.clone(),
                    position,
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn first_stage_examples() {
        let r = 0.5f64.sqrt();
        let idx = index(&[("e1", vec![1.0, 0.0]), ("e2", vec![0.0, 1.0]), ("mix", vec![r, r])]);
        let top = first_stage_retrieve(&[1.0, 0.0], &idx, 2).unwrap();
        assert_eq!(top[0], ("e1".to_string(), 1.0));
        assert_eq!(top[1].0, "mix");
        assert!((top[1].1 - r).abs() < 1e-12);
        assert_eq!(first_stage_retrieve(&[1.0, 0.0], &idx, 10).unwrap().len(), 3);
        let single = index(&[("only", vec![1.0])]);
        assert_eq!(first_stage_retrieve(&[0.0], &single, 1).unwrap()[0].0, "only");
    }

    #[test]
    fn first_stage_ties_by_doc_id() {
        let idx = index(&[("b", vec![1.0]), ("a", vec![1.0]), ("c", vec![1.0])]);
        let ids: Vec<_> = first_stage_retrieve(&[1.0], &idx, 3)
            .unwrap()
            .into_iter()
            .map(|(d, _)| d)
            .collect();
        assert_eq!(ids, ["a", "b", "c"]);
    }

    #[test]
    fn first_stage_errors() {
        assert!(matches!(
            first_stage_retrieve(&[1.0], &CorpusIndex::default(), 1),
            Err(PipelineError::EmptyIndex)
        ));
        let idx = index(&[("a", vec![1.0])]);
        assert!(matches!(first_stage_retrieve(&[1.0], &idx, 0), Err(PipelineError::InvalidK)));
        assert!(first_stage_retrieve(&[1.0, 0.0], &idx, 1).is_err());
    }

    #[test]
    fn index_rejects_duplicates() {
        let e = |id: &str| IndexEntry {
            doc_id: id.into(),
            cls: vec![1.0],
            position: 0,
        };
        assert!(CorpusIndex::new(vec![e("a"), e("a")]).is_err());
    }

    #[test]
    fn ordering_rule() {
        let row = |id: &str, c: f64, f: f64| ScoreBreakdown {
            doc_id: id.into(),
            first_stage: f,
            score1: None,
            score2: None,
            combined: c,
            fallback_used: false,
            fallback_reason: None,
        };
        let mut rows = [row("z", 1.0, 0.1), row("b", 1.0, 0.5), row("a", 1.0, 0.5), row("y", 2.0, 0.0)];
        rows.sort_by(rank_order);
        let ids: Vec<_> = rows.iter().map(|r| r.doc_id.as_str()).collect();
        assert_eq!(ids, ["y", "a", "b", "z"]);
    }
}
