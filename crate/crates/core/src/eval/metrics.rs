//! nDCG@k and MAP.
//!
//! Gains are `2^rel - 1` with a `log2(rank + 1)` discount. MAP treats any
//! grade above zero as relevant. The evaluated queries are the union of the
//! run's and the qrels' queries; a query with no relevant documents scores
//! zero and is counted unless `exclude_unjudged` is set.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use super::data::{Formulation, NegConstraintItem, Qrels};
use super::run::Run;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MetricOptions {
    pub exclude_unjudged: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct MetricScores {
    pub per_query: BTreeMap<String, f64>,
    pub mean: f64,
}

impl MetricScores {
    fn from_map(per_query: BTreeMap<String, f64>) -> Self {
        let mean = if per_query.is_empty() {
            0.0
        } else {
            per_query.values().sum::<f64>() / per_query.len() as f64
        };
        MetricScores { per_query, mean }
    }
}

fn gain(rel: u32) -> f64 {
    2f64.powi(rel as i32) - 1.0
}

fn discount(rank: usize) -> f64 {
    ((rank + 1) as f64).log2()
}

/// nDCG@k of one ranking against one query's judgments.
pub fn ndcg_for_ranking(ranked: &[&str], judged: Option<&BTreeMap<String, u32>>, k: usize) -> f64 {
    let Some(judged) = judged else { return 0.0 };
    let rel = |d: &str| judged.get(d).copied().unwrap_or(0);
    let dcg: f64 = ranked
        .iter()
        .take(k)
        .enumerate()
        .map(|(i, d)| gain(rel(d)) / discount(i + 1))
        .sum();
    let mut ideal: Vec<u32> = judged.values().copied().filter(|&r| r > 0).collect();
    ideal.sort_unstable_by(|a, b| b.cmp(a));
    let idcg: f64 = ideal
        .iter()
        .take(k)
        .enumerate()
        .map(|(i, &r)| gain(r) / discount(i + 1))
        .sum();
    if idcg == 0.0 {
        0.0
    } else {
        dcg / idcg
    }
}

/// Average precision of one ranking; `R` counts every relevant judgment.
pub fn average_precision(ranked: &[&str], judged: Option<&BTreeMap<String, u32>>) -> f64 {
    let Some(judged) = judged else { return 0.0 };
    let total_relevant = judged.values().filter(|&&r| r > 0).count();
    if total_relevant == 0 {
        return 0.0;
    }
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (i, d) in ranked.iter().enumerate() {
        if judged.get(*d).copied().unwrap_or(0) > 0 {
            hits += 1;
            sum += hits as f64 / (i + 1) as f64;
        }
    }
    sum / total_relevant as f64
}

fn evaluated_queries<'a>(run: &'a Run, qrels: &'a Qrels, opts: MetricOptions) -> Vec<&'a str> {
    let all: BTreeSet<&str> = run.query_ids().chain(qrels.query_ids()).collect();
    all.into_iter()
        .filter(|q| !opts.exclude_unjudged || qrels.relevant_count(q) > 0)
        .collect()
}

pub fn ndcg_at_k(run: &Run, qrels: &Qrels, k: usize, opts: MetricOptions) -> MetricScores {
    let per_query = evaluated_queries(run, qrels, opts)
        .into_iter()
        .map(|q| (q.to_string(), ndcg_for_ranking(&run.doc_ids(q), qrels.for_query(q), k)))
        .collect();
    MetricScores::from_map(per_query)
}

pub fn mean_average_precision(run: &Run, qrels: &Qrels, opts: MetricOptions) -> MetricScores {
    let per_query = evaluated_queries(run, qrels, opts)
        .into_iter()
        .map(|q| (q.to_string(), average_precision(&run.doc_ids(q), qrels.for_query(q))))
        .collect();
    MetricScores::from_map(per_query)
}

/// Per-formulation means plus both ways of totalling them.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct FormulationSummary {
    pub per_formulation: BTreeMap<&'static str, f64>,
    /// Mean over all queries.
    pub micro_total: f64,
    /// Mean of the per-formulation means.
    pub macro_total: f64,
}

pub fn summarize_by_formulation(items: &[NegConstraintItem], scores: &MetricScores) -> FormulationSummary {
    let mut groups: BTreeMap<Formulation, Vec<f64>> = BTreeMap::new();
    for item in items {
        if let Some(&s) = scores.per_query.get(&item.query_id) {
            groups.entry(item.formulation).or_default().push(s);
        }
    }
    let mean = |v: &[f64]| if v.is_empty() { 0.0 } else { v.iter().sum::<f64>() / v.len() as f64 };
    let per_formulation: BTreeMap<&'static str, f64> =
        groups.iter().map(|(f, v)| (f.as_str(), mean(v))).collect();
    let all: Vec<f64> = groups.values().flatten().copied().collect();
    let means: Vec<f64> = per_formulation.values().copied().collect();
    FormulationSummary {
        micro_total: mean(&all),
        macro_total: mean(&means),
        per_formulation,
    }
}
