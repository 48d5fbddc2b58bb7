//! Connective-constrained attention from FOL tokens over NL words.
//!
//! For FOL token `j` and NL word `i`, the value attended to is
//! `h_i + σ_ji z_j`, where `σ_ji` is `-1` for an unaligned negation, `+1`
//! for an unaligned binary connective and `0` otherwise. Logits are
//! `z_j · (h_i + σ_ji z_j) / √d_k`, normalized by a softmax over `i`. The
//! per-token contextual vectors are mean-pooled into one text vector.

use ndarray::{Array1, Array2};
use serde::Serialize;
use thiserror::Error;

use crate::embedding::TokenMatrix;
use crate::fol::{FolTokenSeq, TokenClass};
use crate::linalg::dot;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConnectiveError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-finite attention logit for FOL token {0}")]
    NonFiniteLogit(usize),
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
}

/// `n × m` matrix over `{-1, 0, +1}`; row `j` is a FOL token, column `i` an NL word.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SigmaMatrix(Array2<i8>);

impl SigmaMatrix {
    pub fn zeros(n: usize, m: usize) -> Self {
        SigmaMatrix(Array2::zeros((n, m)))
    }

    pub fn from_array(values: Array2<i8>) -> Result<Self, ConnectiveError> {
        if values.iter().any(|v| !(-1..=1).contains(v)) {
            return Err(ConnectiveError::ShapeMismatch("sigma entries must be -1, 0 or 1".into()));
        }
        Ok(SigmaMatrix(values))
    }

    pub fn get(&self, j: usize, i: usize) -> i8 {
        self.0[[j, i]]
    }

    pub fn as_array(&self) -> &Array2<i8> {
        &self.0
    }

    /// (FOL tokens, NL words)
    pub fn dim(&self) -> (usize, usize) {
        self.0.dim()
    }
}

/// σ for one (token class, alignment) cell.
pub fn sigma_value(class: TokenClass, unaligned: bool) -> i8 {
    match (class, unaligned) {
        (TokenClass::Negation, true) => -1,
        (TokenClass::BinaryConnective, true) => 1,
        _ => 0,
    }
}

/// Builds σ from the FOL tokens and the plan's zero mask (`m × n`, NL × FOL).
pub fn assign_sigma(fol: &FolTokenSeq, zero_mask: &Array2<bool>) -> Result<SigmaMatrix, ConnectiveError> {
    let (m, n) = zero_mask.dim();
    if fol.len() != n {
        return Err(ConnectiveError::ShapeMismatch(format!(
            "{} FOL tokens but zero mask has {n} columns",
            fol.len()
        )));
    }
    let mut sigma = Array2::zeros((n, m));
    for (j, tok) in fol.tokens.iter().enumerate() {
        for i in 0..m {
            sigma[[j, i]] = sigma_value(tok.class, zero_mask[[i, j]]);
        }
    }
    Ok(SigmaMatrix(sigma))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttentionResult {
    /// `n × m`, each row a distribution over NL words.
    pub weights: Array2<f64>,
    /// `n × d` contextual vectors, one per FOL token.
    pub contextual: Array2<f64>,
    /// Mean of the contextual rows.
    pub pooled: Vec<f64>,
    pub d_k: usize,
}

pub fn attend(
    h: &TokenMatrix,
    z: &TokenMatrix,
    sigma: &SigmaMatrix,
    d_k: usize,
) -> Result<AttentionResult, ConnectiveError> {
    let (m, n, d) = (h.rows(), z.rows(), h.dim());
    if z.dim() != d {
        return Err(ConnectiveError::ShapeMismatch(format!(
            "H is {d}-d but Z is {}-d",
            z.dim()
        )));
    }
    if sigma.dim() != (n, m) {
        return Err(ConnectiveError::ShapeMismatch(format!(
            "sigma is {:?}, expected ({n}, {m})",
            sigma.dim()
        )));
    }
    if d_k == 0 {
        return Err(ConnectiveError::ShapeMismatch("d_k must be positive".into()));
    }
    let scale = (d_k as f64).sqrt();

    let mut weights = Array2::zeros((n, m));
    let mut contextual = Array2::zeros((n, d));
    let mut values = Array2::<f64>::zeros((m, d));
    let mut logits = vec![0.0; m];

    for j in 0..n {
        let zj = z.row(j);
        for i in 0..m {
            let s = f64::from(sigma.get(j, i));
            let mut vi = values.row_mut(i);
            vi.assign(&h.row(i));
            if s != 0.0 {
                vi.scaled_add(s, &zj);
            }
            logits[i] = zj.dot(&vi) / scale;
        }
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            return Err(ConnectiveError::NonFiniteLogit(j));
        }
        let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
        let total: f64 = exps.iter().sum();
        for i in 0..m {
            let alpha = exps[i] / total;
            weights[[j, i]] = alpha;
            contextual.row_mut(j).scaled_add(alpha, &values.row(i));
        }
    }

    let pooled: Array1<f64> = contextual
        .mean_axis(ndarray::Axis(0))
        .expect("at least one FOL token");
    Ok(AttentionResult {
        weights,
        contextual,
        pooled: pooled.to_vec(),
        d_k,
    })
}

/// Inner product of two pooled text vectors.
pub fn score2(query_pooled: &[f64], doc_pooled: &[f64]) -> Result<f64, ConnectiveError> {
    if query_pooled.len() != doc_pooled.len() {
        return Err(ConnectiveError::DimensionMismatch(
            query_pooled.len(),
            doc_pooled.len(),
        ));
    }
    Ok(dot(query_pooled, doc_pooled))
}
