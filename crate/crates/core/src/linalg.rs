//! Small dense-vector helpers shared by the scoring modules.

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn l2_norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

/// Returns `v / ‖v‖`, or `None` when the norm is below `min_norm`.
pub fn normalized(v: &[f64], min_norm: f64) -> Option<Vec<f64>> {
    let norm = l2_norm(v);
    if !norm.is_finite() || norm < min_norm {
        return None;
    }
    Some(v.iter().map(|x| x / norm).collect())
}
