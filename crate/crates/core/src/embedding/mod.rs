//! Embedding provider contract.
//!
//! Every text (natural-language or FOL) is represented by an [`EncodedText`]:
//! the CLS vector plus one embedding row per word (NL side) or per FOL
//! lexical token (FOL side). Backends that emit subword pieces are adapted
//! through [`PoolingProvider`], which mean-pools pieces into those units.

mod pooling;
mod service;
mod store;

use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use pooling::{nl_words, pool_pieces, PoolingProvider, RawEncoding, SubwordEncoder, Word};
pub use service::ServiceEncoder;
pub use store::{EmbeddingStore, STORE_MAGIC, STORE_VERSION};

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("text is empty")]
    EmptyText,
    #[error("batch is empty")]
    EmptyBatch,
    #[error("embedding provider unavailable: {0}")]
    ProviderUnavailable(String),
    #[error("backend truncated the input at {max} tokens")]
    TokenLimitExceeded { max: usize },
    #[error("text not present in embedding store")]
    CacheMiss,
    #[error("embedding dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid token matrix: {0}")]
    InvalidMatrix(String),
    #[error("FOL text could not be tokenized: {0}")]
    Fol(#[from] crate::fol::FolError),
    #[error("item {index}: {source}")]
    AtIndex {
        index: usize,
        #[source]
        source: Box<EmbedError>,
    },
    #[error("store format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Which side of the NL/FOL pair a text belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Nl,
    Fol,
}

impl Side {
    pub fn prefix_byte(self) -> u8 {
        match self {
            Side::Nl => 0x00,
            Side::Fol => 0x01,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Side::Nl => "nl",
            Side::Fol => "fol",
        }
    }
}

/// SHA-256 of the side prefix byte followed by the UTF-8 text.
pub fn text_digest(text: &str, side: Side) -> [u8; 32] {
    let mut hasher = Sha256::new();
    hasher.update([side.prefix_byte()]);
    hasher.update(text.as_bytes());
    hasher.finalize().into()
}

/// Row-per-token embedding matrix (`m × d`, `m ≥ 1`, finite entries).
#[derive(Debug, Clone, PartialEq)]
pub struct TokenMatrix(Array2<f64>);

impl TokenMatrix {
    pub fn new(rows: Array2<f64>) -> Result<Self, EmbedError> {
        if rows.nrows() == 0 {
            return Err(EmbedError::InvalidMatrix("no rows".into()));
        }
        if rows.ncols() == 0 {
            return Err(EmbedError::InvalidMatrix("zero dimension".into()));
        }
        if rows.iter().any(|x| !x.is_finite()) {
            return Err(EmbedError::InvalidMatrix("non-finite entry".into()));
        }
        Ok(TokenMatrix(rows))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, EmbedError> {
        let d = rows.first().map(Vec::len).unwrap_or(0);
        if let Some(bad) = rows.iter().find(|r| r.len() != d) {
            return Err(EmbedError::DimensionMismatch {
                expected: d,
                got: bad.len(),
            });
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        let arr = Array2::from_shape_vec((rows.len(), d), flat)
            .map_err(|e| EmbedError::InvalidMatrix(e.to_string()))?;
        Self::new(arr)
    }

    pub fn rows(&self) -> usize {
        self.0.nrows()
    }

    pub fn dim(&self) -> usize {
        self.0.ncols()
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.0.row(i)
    }

    pub fn as_array(&self) -> &Array2<f64> {
        &self.0
    }

    /// Copy with `row` inserted as the first row.
    pub fn with_leading_row(&self, row: &[f64]) -> Result<Self, EmbedError> {
        if row.len() != self.dim() {
            return Err(EmbedError::DimensionMismatch {
                expected: self.dim(),
                got: row.len(),
            });
        }
        let mut arr = Array2::zeros((self.rows() + 1, self.dim()));
        arr.row_mut(0).assign(&ArrayView1::from(row));
        arr.slice_mut(ndarray::s![1.., ..]).assign(&self.0);
        Self::new(arr)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncodedText {
    pub text_hash: [u8; 32],
    pub surface_tokens: Vec<String>,
    pub token_matrix: TokenMatrix,
    pub cls: Vec<f64>,
}

impl EncodedText {
    pub fn new(
        text_hash: [u8; 32],
        surface_tokens: Vec<String>,
        token_matrix: TokenMatrix,
        cls: Vec<f64>,
    ) -> Result<Self, EmbedError> {
        if surface_tokens.len() != token_matrix.rows() {
            return Err(EmbedError::InvalidMatrix(format!(
                "{} surface tokens for {} rows",
                surface_tokens.len(),
                token_matrix.rows()
            )));
        }
        if cls.len() != token_matrix.dim() {
            return Err(EmbedError::DimensionMismatch {
                expected: token_matrix.dim(),
                got: cls.len(),
            });
        }
        if cls.iter().any(|x| !x.is_finite()) {
            return Err(EmbedError::InvalidMatrix("non-finite CLS entry".into()));
        }
        Ok(EncodedText {
            text_hash,
            surface_tokens,
            token_matrix,
            cls,
        })
    }

    pub fn dim(&self) -> usize {
        self.cls.len()
    }
}

/// Anything that can turn texts into [`EncodedText`]s.
pub trait EmbeddingProvider: Send + Sync {
    fn encode(&self, text: &str, side: Side) -> Result<EncodedText, EmbedError>;

    /// Order-preserving batch encode; the first failure is reported with its index.
    fn batch_encode(&self, texts: &[&str], side: Side) -> Result<Vec<EncodedText>, EmbedError> {
        if texts.is_empty() {
            return Err(EmbedError::EmptyBatch);
        }
        texts
            .iter()
            .enumerate()
            .map(|(index, t)| {
                self.encode(t, side).map_err(|e| EmbedError::AtIndex {
                    index,
                    source: Box::new(e),
                })
            })
            .collect()
    }
}

impl<P: EmbeddingProvider + ?Sized> EmbeddingProvider for &P {
    fn encode(&self, text: &str, side: Side) -> Result<EncodedText, EmbedError> {
        (**self).encode(text, side)
    }

    fn batch_encode(&self, texts: &[&str], side: Side) -> Result<Vec<EncodedText>, EmbedError> {
        (**self).batch_encode(texts, side)
    }
}
