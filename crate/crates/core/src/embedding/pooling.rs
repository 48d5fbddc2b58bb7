use std::sync::OnceLock;

use ndarray::Array2;
use rayon::prelude::*;

use super::{text_digest, EmbedError, EmbeddingProvider, EncodedText, Side, TokenMatrix};
use crate::fol::tokenize_fol;

/// Backend output for one text: CLS vector plus per-piece surfaces and vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct RawEncoding {
    pub cls: Vec<f64>,
    pub tokens: Vec<String>,
    pub vectors: Vec<Vec<f64>>,
}

/// A backend that embeds texts at its own (usually subword) granularity.
pub trait SubwordEncoder: Send + Sync {
    fn encode_raw(&self, texts: &[&str], side: Side) -> Result<Vec<RawEncoding>, EmbedError>;
}

/// A pooling unit: an NL word or a FOL lexical token.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Word {
    pub surface: String,
    pub span: (usize, usize),
}

/// Maximal runs of alphanumeric characters; everything else delimits.
pub fn nl_words(text: &str) -> Vec<Word> {
    let mut words = Vec::new();
    let mut start: Option<usize> = None;
    for (i, c) in text.char_indices() {
        match (c.is_alphanumeric(), start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                words.push(Word {
                    surface: text[s..i].to_string(),
                    span: (s, i),
                });
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        words.push(Word {
            surface: text[s..].to_string(),
            span: (s, text.len()),
        });
    }
    words
}

fn units_for(text: &str, side: Side) -> Result<Vec<Word>, EmbedError> {
    match side {
        Side::Nl => Ok(nl_words(text)),
        Side::Fol => Ok(tokenize_fol(text)?
            .tokens
            .into_iter()
            .map(|t| Word {
                surface: t.surface,
                span: t.span,
            })
            .collect()),
    }
}

fn clean_piece(piece: &str) -> &str {
    piece
        .strip_prefix("##")
        .or_else(|| piece.strip_prefix('Ġ'))
        .or_else(|| piece.strip_prefix('▁'))
        .unwrap_or(piece)
}

fn is_unknown_marker(piece: &str) -> bool {
    matches!(piece, "[UNK]" | "<unk>")
}

fn is_special_marker(piece: &str) -> bool {
    let bracketed = |open: char, close: char| {
        piece.len() > 2 && piece.starts_with(open) && piece.ends_with(close)
    };
    bracketed('[', ']') || bracketed('<', '>')
}

/// Mean-pools backend pieces into words (NL) or FOL tokens (FOL).
///
/// Pieces are aligned to the text by case-insensitive character matching
/// from a moving cursor. Special markers are skipped, unknown markers take
/// the rest of the unit under the cursor, and pieces covering only
/// delimiters are dropped.
pub fn pool_pieces(text: &str, side: Side, raw: &RawEncoding) -> Result<EncodedText, EmbedError> {
    if text.trim().is_empty() {
        return Err(EmbedError::EmptyText);
    }
    if raw.tokens.len() != raw.vectors.len() {
        return Err(EmbedError::ProviderUnavailable(format!(
            "{} tokens but {} vectors",
            raw.tokens.len(),
            raw.vectors.len()
        )));
    }
    let dim = raw.cls.len();
    if dim == 0 {
        return Err(EmbedError::ProviderUnavailable("zero-dimensional CLS".into()));
    }
    if let Some(v) = raw.vectors.iter().find(|v| v.len() != dim) {
        return Err(EmbedError::DimensionMismatch {
            expected: dim,
            got: v.len(),
        });
    }

    let units = units_for(text, side)?;
    if units.is_empty() {
        return Err(EmbedError::EmptyText);
    }

    // Per-char owner unit.
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let owner: Vec<Option<usize>> = chars
        .iter()
        .map(|&(b, _)| units.iter().position(|u| u.span.0 <= b && b < u.span.1))
        .collect();

    let mut sums = vec![vec![0.0f64; dim]; units.len()];
    let mut counts = vec![0usize; units.len()];
    let mut cursor = 0usize;

    for (piece, vector) in raw.tokens.iter().zip(&raw.vectors) {
        while cursor < chars.len() && chars[cursor].1.is_whitespace() {
            cursor += 1;
        }
        let target = if is_unknown_marker(piece) {
            let unit = owner.get(cursor).copied().flatten();
            match unit {
                Some(u) => {
                    while cursor < chars.len() && owner[cursor] == Some(u) {
                        cursor += 1;
                    }
                }
                None => cursor = (cursor + 1).min(chars.len()),
            }
            unit
        } else if is_special_marker(piece) {
            continue;
        } else {
            let clean = clean_piece(piece);
            let want: Vec<char> = clean.chars().flat_map(char::to_lowercase).collect();
            if want.is_empty() {
                continue;
            }
            let have: Vec<char> = chars[cursor..]
                .iter()
                .take(want.len())
                .flat_map(|&(_, c)| c.to_lowercase())
                .collect();
            let span = clean.chars().count().min(chars.len() - cursor);
            let unit = if have == want {
                owner[cursor..cursor + span].iter().flatten().next().copied()
            } else {
                owner.get(cursor).copied().flatten()
            };
            cursor += span;
            unit
        };
        if let Some(u) = target {
            for (acc, x) in sums[u].iter_mut().zip(vector) {
                *acc += x;
            }
            counts[u] += 1;
        }
    }

    if let Some(first_gap) = counts.iter().position(|&c| c == 0) {
        let all_trailing = counts[first_gap..].iter().all(|&c| c == 0);
        return Err(if all_trailing {
            EmbedError::TokenLimitExceeded {
                max: raw.tokens.len(),
            }
        } else {
            EmbedError::ProviderUnavailable(format!(
                "no backend piece aligned to token {:?}",
                units[first_gap].surface
            ))
        });
    }

    let mut rows = Array2::zeros((units.len(), dim));
    for (u, (sum, &n)) in sums.iter().zip(&counts).enumerate() {
        for (k, x) in sum.iter().enumerate() {
            rows[[u, k]] = x / n as f64;
        }
    }
    let matrix = TokenMatrix::new(rows)?;
    EncodedText::new(
        text_digest(text, side),
        units.into_iter().map(|u| u.surface).collect(),
        matrix,
        raw.cls.clone(),
    )
}

/// Adapts a [`SubwordEncoder`] to the [`EmbeddingProvider`] contract.
pub struct PoolingProvider<E> {
    encoder: E,
    batch_size: usize,
    pool: rayon::ThreadPool,
    dim: OnceLock<usize>,
}

impl<E: SubwordEncoder> PoolingProvider<E> {
    /// `concurrency` bounds the number of backend requests in flight.
    pub fn new(encoder: E, batch_size: usize, concurrency: usize) -> Self {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(concurrency.max(1))
            .build()
            .expect("thread pool");
        PoolingProvider {
            encoder,
            batch_size: batch_size.max(1),
            pool,
            dim: OnceLock::new(),
        }
    }

    pub fn encoder(&self) -> &E {
        &self.encoder
    }

    fn check_dim(&self, enc: &EncodedText) -> Result<(), EmbedError> {
        let expected = *self.dim.get_or_init(|| enc.dim());
        if expected != enc.dim() {
            return Err(EmbedError::DimensionMismatch {
                expected,
                got: enc.dim(),
            });
        }
        Ok(())
    }

    fn encode_chunk(&self, texts: &[&str], side: Side) -> Result<Vec<EncodedText>, (usize, EmbedError)> {
        if let Some(i) = texts.iter().position(|t| t.trim().is_empty()) {
            return Err((i, EmbedError::EmptyText));
        }
        let raws = self.encoder.encode_raw(texts, side).map_err(|e| (0, e))?;
        if raws.len() != texts.len() {
            return Err((
                0,
                EmbedError::ProviderUnavailable(format!(
                    "asked for {} encodings, got {}",
                    texts.len(),
                    raws.len()
                )),
            ));
        }
        texts
            .iter()
            .zip(&raws)
            .enumerate()
            .map(|(i, (t, raw))| {
                let enc = pool_pieces(t, side, raw).map_err(|e| (i, e))?;
                self.check_dim(&enc).map_err(|e| (i, e))?;
                Ok(enc)
            })
            .collect()
    }
}

impl<E: SubwordEncoder> EmbeddingProvider for PoolingProvider<E> {
    fn encode(&self, text: &str, side: Side) -> Result<EncodedText, EmbedError> {
        self.encode_chunk(&[text], side)
            .map(|mut v| v.remove(0))
            .map_err(|(_, e)| e)
    }

    fn batch_encode(&self, texts: &[&str], side: Side) -> Result<Vec<EncodedText>, EmbedError> {
        if texts.is_empty() {
            return Err(EmbedError::EmptyBatch);
        }
        let chunks: Vec<(usize, &[&str])> = texts
            .chunks(self.batch_size)
            .enumerate()
            .map(|(c, chunk)| (c * self.batch_size, chunk))
            .collect();
        let results: Vec<_> = self.pool.install(|| {
            chunks
                .par_iter()
                .map(|&(offset, chunk)| {
                    self.encode_chunk(chunk, side).map_err(|(i, e)| EmbedError::AtIndex {
                        index: offset + i,
                        source: Box::new(e),
                    })
                })
                .collect()
        });
        let mut out = Vec::with_capacity(texts.len());
        for r in results {
            out.extend(r?);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raw(tokens: &[&str], vectors: Vec<Vec<f64>>) -> RawEncoding {
        RawEncoding {
            cls: vec![1.0; vectors[0].len()],
            tokens: tokens.iter().map(|s| s.to_string()).collect(),
            vectors,
        }
    }

    #[test]
    fn mean_pools_subwords() {
        let r = raw(
            &["[CLS]", "un", "##believ", "##able", "cats", "[SEP]"],
            vec![
                vec![9.0, 9.0],
                vec![1.0, 0.0],
                vec![0.0, 3.0],
                vec![2.0, 0.0],
                vec![5.0, 5.0],
                vec![9.0, 9.0],
            ],
        );
        let enc = pool_pieces("Unbelievable cats!", Side::Nl, &r).unwrap();
        assert_eq!(enc.surface_tokens, vec!["Unbelievable", "cats"]);
        assert_eq!(enc.token_matrix.row(0).to_vec(), vec![1.0, 1.0]);
        assert_eq!(enc.token_matrix.row(1).to_vec(), vec![5.0, 5.0]);
    }

    #[test]
    fn punctuation_pieces_are_dropped_for_nl() {
        let r = raw(&["a", ",", "b"], vec![vec![1.0], vec![7.0], vec![3.0]]);
        let enc = pool_pieces("a, b", Side::Nl, &r).unwrap();
        assert_eq!(enc.token_matrix.rows(), 2);
        assert_eq!(enc.token_matrix.row(1).to_vec(), vec![3.0]);
    }

    #[test]
    fn fol_pieces_follow_parser_tokens() {
        let r = raw(
            &["[UNK]", "p", "(", "x", ")"],
            vec![vec![1.0], vec![2.0], vec![3.0], vec![4.0], vec![5.0]],
        );
        let enc = pool_pieces("¬P(x)", Side::Fol, &r).unwrap();
        assert_eq!(enc.surface_tokens, vec!["¬", "P", "(", "x", ")"]);
        let col: Vec<f64> = (0..5).map(|i| enc.token_matrix.row(i)[0]).collect();
        assert_eq!(col, vec![1.0, 2.0, 3.0, 4.0, 5.0]);
    }

    #[test]
    fn truncation_is_reported() {
        let r = raw(&["one", "two"], vec![vec![1.0], vec![1.0]]);
        match pool_pieces("one two three four", Side::Nl, &r) {
            Err(EmbedError::TokenLimitExceeded { max }) => assert_eq!(max, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_empty_text() {
        let r = raw(&["a"], vec![vec![1.0]]);
        assert!(matches!(pool_pieces("  ", Side::Nl, &r), Err(EmbedError::EmptyText)));
    }
}
