//! Logic alignment: fold the NL/FOL alignment plan into the CLS vector.
//!
//! The updated vector is `Hᵀ · P · Z · cls`, evaluated right to left so no
//! `d × d` intermediate is ever built.

use ndarray::{Array1, Array2, ArrayView1};
use serde::Serialize;
use thiserror::Error;

use crate::embedding::TokenMatrix;
use crate::linalg::{dot, l2_norm};

/// Fused vectors with a smaller norm than this are rejected.
pub const MIN_FUSED_NORM: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AlignError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("fused vector is degenerate (norm {0:e})")]
    DegenerateFusion(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FusedVector {
    pub vector: Vec<f64>,
    pub was_normalized: bool,
}

/// `Hᵀ · P · Z · cls` without normalization.
pub fn fuse_cls_raw(
    h: &TokenMatrix,
    plan: &Array2<f64>,
    z: &TokenMatrix,
    cls: &[f64],
) -> Result<Vec<f64>, AlignError> {
    let (m, n) = plan.dim();
    if h.rows() != m || z.rows() != n {
        return Err(AlignError::DimensionMismatch(format!(
            "plan is {m}x{n} but H has {} rows and Z has {}",
            h.rows(),
            z.rows()
        )));
    }
    if h.dim() != z.dim() || cls.len() != z.dim() {
        return Err(AlignError::DimensionMismatch(format!(
            "H is {}-d, Z is {}-d, cls is {}-d",
            h.dim(),
            z.dim(),
            cls.len()
        )));
    }
    if cls.iter().any(|x| !x.is_finite()) {
        return Err(AlignError::DimensionMismatch("cls has non-finite entries".into()));
    }
    let z_cls: Array1<f64> = z.as_array().dot(&ArrayView1::from(cls));
    let p_z_cls: Array1<f64> = plan.dot(&z_cls);
    let fused = h.as_array().t().dot(&p_z_cls);
    Ok(fused.to_vec())
}

/// Fused CLS vector, L2-normalized when `normalize` is set.
///
/// A fused vector whose norm falls below [`MIN_FUSED_NORM`] is rejected
/// either way, since it carries no direction to score.
pub fn fuse_cls(
    h: &TokenMatrix,
    plan: &Array2<f64>,
    z: &TokenMatrix,
    cls: &[f64],
    normalize: bool,
) -> Result<FusedVector, AlignError> {
    let raw = fuse_cls_raw(h, plan, z, cls)?;
    let norm = l2_norm(&raw);
    if !norm.is_finite() || norm < MIN_FUSED_NORM {
        return Err(AlignError::DegenerateFusion(norm));
    }
    let vector = if normalize {
        raw.iter().map(|x| x / norm).collect()
    } else {
        raw
    };
    Ok(FusedVector {
        vector,
        was_normalized: normalize,
    })
}

/// Inner product of two fused vectors.
pub fn score1(query: &FusedVector, doc: &FusedVector) -> Result<f64, AlignError> {
    if query.vector.len() != doc.vector.len() {
        return Err(AlignError::DimensionMismatch(format!(
            "{} vs {}",
            query.vector.len(),
            doc.vector.len()
        )));
    }
    Ok(dot(&query.vector, &doc.vector))
}
