//! Neuro-symbolic reranking over dense first-stage retrieval.

pub mod cli;
pub mod config;
pub mod connective;
pub mod embedding;
pub mod eval;
pub mod fol;
pub mod linalg;
pub mod logic_align;
pub mod ot;
pub mod pipeline;
pub mod translate;
