//! Datasets, run files, metrics and dataset generation.

pub mod data;
pub mod generate;
pub mod metrics;
pub mod run;

pub use data::{
    derived_qrels, load_beir, load_corpus, load_negconstraint, load_negconstraint_items, load_qrels,
    load_queries, write_negconstraint_items, BeirDataset, Corpus, DataError, Document, Formulation,
    NegConstraintItem, NegConstraintSet, Qrels, Query,
};
pub use generate::{generate_negconstraint, generation_prompt, GenerateError};
pub use metrics::{
    average_precision, mean_average_precision, ndcg_at_k, ndcg_for_ranking, summarize_by_formulation,
    FormulationSummary, MetricOptions, MetricScores,
};
pub use run::{Run, RunError, RunRow, RUN_TAG};
