//! Precomputed embedding store.
//!
//! File layout (little-endian):
//!
//! ```text
//! "NSIR" | version u32 | dim u32 | count u64
//! per record:
//!   sha256(side byte ++ text) [32]
//!   token count u32
//!   token surfaces: (len u16, utf-8 bytes) * count
//!   cls: dim * f32
//!   rows: count * dim * f32, row-major
//! ```
//!
//! Records are written in digest order so identical contents always
//! produce identical bytes.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;

use super::{text_digest, EmbedError, EmbeddingProvider, EncodedText, Side, TokenMatrix};

pub const STORE_MAGIC: &[u8; 4] = b"NSIR";
pub const STORE_VERSION: u32 = 1;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EmbeddingStore {
    dim: Option<usize>,
    records: BTreeMap<[u8; 32], EncodedText>,
}

fn round_f32(x: f64) -> f64 {
    x as f32 as f64
}

impl EmbeddingStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn dim(&self) -> Option<usize> {
        self.dim
    }

    /// Adds a record under `encoded.text_hash`. Values are rounded to `f32`
    /// on the way in, matching what the file holds.
    pub fn insert(&mut self, encoded: EncodedText) -> Result<(), EmbedError> {
        let d = encoded.dim();
        match self.dim {
            Some(expected) if expected != d => {
                return Err(EmbedError::DimensionMismatch { expected, got: d })
            }
            _ => self.dim = Some(d),
        }
        let rows = encoded.token_matrix.as_array().mapv(round_f32);
        let rounded = EncodedText::new(
            encoded.text_hash,
            encoded.surface_tokens,
            TokenMatrix::new(rows)?,
            encoded.cls.iter().copied().map(round_f32).collect(),
        )?;
        self.records.insert(rounded.text_hash, rounded);
        Ok(())
    }

    pub fn get(&self, text: &str, side: Side) -> Option<&EncodedText> {
        self.records.get(&text_digest(text, side))
    }

    pub fn contains(&self, text: &str, side: Side) -> bool {
        self.get(text, side).is_some()
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<(), EmbedError> {
        let dim = self.dim.unwrap_or(0);
        w.write_all(STORE_MAGIC)?;
        w.write_all(&STORE_VERSION.to_le_bytes())?;
        w.write_all(&(dim as u32).to_le_bytes())?;
        w.write_all(&(self.records.len() as u64).to_le_bytes())?;
        for (hash, rec) in &self.records {
            w.write_all(hash)?;
            w.write_all(&(rec.surface_tokens.len() as u32).to_le_bytes())?;
            for tok in &rec.surface_tokens {
                let len = u16::try_from(tok.len())
                    .map_err(|_| EmbedError::Format(format!("token surface too long: {} bytes", tok.len())))?;
                w.write_all(&len.to_le_bytes())?;
                w.write_all(tok.as_bytes())?;
            }
            for &x in &rec.cls {
                w.write_all(&(x as f32).to_le_bytes())?;
            }
            for &x in rec.token_matrix.as_array().iter() {
                w.write_all(&(x as f32).to_le_bytes())?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<(), EmbedError> {
        self.write_to(BufWriter::new(File::create(path)?))
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self, EmbedError> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != STORE_MAGIC {
            return Err(EmbedError::Format("bad magic".into()));
        }
        let version = read_u32(&mut r)?;
        if version != STORE_VERSION {
            return Err(EmbedError::Format(format!("unsupported version {version}")));
        }
        let dim = read_u32(&mut r)? as usize;
        let mut count_buf = [0u8; 8];
        r.read_exact(&mut count_buf)?;
        let count = u64::from_le_bytes(count_buf);
        if count > 0 && dim == 0 {
            return Err(EmbedError::Format("records with zero dimension".into()));
        }

        let mut store = EmbeddingStore::new();
        for _ in 0..count {
            let mut hash = [0u8; 32];
            r.read_exact(&mut hash)?;
            let tokens = read_u32(&mut r)? as usize;
            let mut surfaces = Vec::with_capacity(tokens);
            for _ in 0..tokens {
                let mut len = [0u8; 2];
                r.read_exact(&mut len)?;
                let mut bytes = vec![0u8; u16::from_le_bytes(len) as usize];
                r.read_exact(&mut bytes)?;
                surfaces.push(
                    String::from_utf8(bytes).map_err(|e| EmbedError::Format(e.to_string()))?,
                );
            }
            let cls = read_f32s(&mut r, dim)?;
            let flat = read_f32s(&mut r, tokens * dim)?;
            let rows = Array2::from_shape_vec((tokens, dim), flat)
                .map_err(|e| EmbedError::Format(e.to_string()))?;
            let rec = EncodedText::new(hash, surfaces, TokenMatrix::new(rows)?, cls)?;
            store.dim = Some(dim);
            store.records.insert(hash, rec);
        }
        let mut trailing = [0u8; 1];
        if r.read(&mut trailing)? != 0 {
            return Err(EmbedError::Format("trailing bytes after last record".into()));
        }
        Ok(store)
    }

    pub fn load(path: &Path) -> Result<Self, EmbedError> {
        Self::read_from(BufReader::new(File::open(path)?))
    }
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32, EmbedError> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_f32s<R: Read>(r: &mut R, n: usize) -> Result<Vec<f64>, EmbedError> {
    let mut bytes = vec![0u8; n * 4];
    r.read_exact(&mut bytes)?;
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect())
}

impl EmbeddingProvider for EmbeddingStore {
    fn encode(&self, text: &str, side: Side) -> Result<EncodedText, EmbedError> {
        if text.trim().is_empty() {
            return Err(EmbedError::EmptyText);
        }
        self.get(text, side).cloned().ok_or(EmbedError::CacheMiss)
    }
}
