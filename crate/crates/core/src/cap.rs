//! The cap operator `c_k`: keep the `k` largest-magnitude entries of a
//! vector and zero the rest.
//!
//! Ties in magnitude go to the lower index. When `k` is at least the vector
//! length the operator is the identity.

use std::cmp::Ordering;

use crate::error::{check_finite, Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct CapResult {
    pub vector: Vec<f64>,
    /// Sorted ascending; always `min(k, len)` long.
    pub kept_indices: Vec<usize>,
}

/// Magnitude descending, then index ascending.
fn rank_order(x: &[f64], a: usize, b: usize) -> Ordering {
    x[b].abs().total_cmp(&x[a].abs()).then(a.cmp(&b))
}

pub fn cap(x: &[f64], k: usize) -> Result<CapResult> {
    check_finite(x)?;
    let n = x.len();
    if k >= n {
        return Ok(CapResult {
            vector: x.to_vec(),
            kept_indices: (0..n).collect(),
        });
    }
    if k == 0 {
        return Ok(CapResult {
            vector: vec![0.0; n],
            kept_indices: Vec::new(),
        });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.select_nth_unstable_by(k - 1, |&a, &b| rank_order(x, a, b));
    let mut kept = order[..k].to_vec();
    kept.sort_unstable();
    let mut vector = vec![0.0; n];
    for &i in &kept {
        vector[i] = x[i];
    }
    Ok(CapResult {
        vector,
        kept_indices: kept,
    })
}

/// Upper bound on `||x - c_k(x)||_2` given `||x||_p` for `p` in (0, 2):
/// `||x||_p * (k + 1)^(1/2 - 1/p)`.
pub fn cap_error_bound(norm_p_of_x: f64, k: usize, p_norm: f64) -> Result<f64> {
    if !(p_norm > 0.0 && p_norm < 2.0) {
        return Err(Error::invalid(format!(
            "norm exponent must lie in (0, 2), got {p_norm}"
        )));
    }
    if !(norm_p_of_x >= 0.0) || !norm_p_of_x.is_finite() {
        return Err(Error::invalid(format!(
            "norm must be finite and non-negative, got {norm_p_of_x}"
        )));
    }
    Ok(norm_p_of_x * ((k + 1) as f64).powf(0.5 - 1.0 / p_norm))
}

/// `||x||_p` for `p` in (0, inf]. For `p < 1` this is the usual quasi-norm.
pub fn lp_norm(x: &[f64], p: f64) -> f64 {
    if p == f64::INFINITY {
        return x.iter().fold(0.0, |m, v| m.max(v.abs()));
    }
    if p == 2.0 {
        return x.iter().map(|v| v * v).sum::<f64>().sqrt();
    }
    if p == 1.0 {
        return x.iter().map(|v| v.abs()).sum();
    }
    x.iter().map(|v| v.abs().powf(p)).sum::<f64>().powf(1.0 / p)
}
