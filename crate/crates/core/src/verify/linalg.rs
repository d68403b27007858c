//! Floating-point helpers for the Monte Carlo suites.

use rand_distr::{Distribution, StandardNormal};

use crate::matrix::SparseSignMatrix;
use crate::rng::stream_rng;

/// `log |det A|` of a square row-major matrix by LU with partial pivoting.
/// `None` when a pivot is exactly zero.
pub fn log_abs_det(a: &[f64], n: usize) -> Option<f64> {
    assert_eq!(a.len(), n * n);
    let mut lu = a.to_vec();
    let mut log_det = 0.0;
    for col in 0..n {
        let pivot_row = (col..n)
            .max_by(|&x, &y| lu[x * n + col].abs().total_cmp(&lu[y * n + col].abs()))
            .expect("nonempty range");
        let pivot = lu[pivot_row * n + col];
        if pivot == 0.0 {
            return None;
        }
        if pivot_row != col {
            for j in 0..n {
                lu.swap(pivot_row * n + j, col * n + j);
            }
        }
        log_det += pivot.abs().ln();
        for r in col + 1..n {
            let factor = lu[r * n + col] / pivot;
            if factor == 0.0 {
                continue;
            }
            for j in col + 1..n {
                lu[r * n + j] -= factor * lu[col * n + j];
            }
        }
    }
    Some(log_det)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OpNormEstimate {
    pub norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Largest singular value of `M` by power iteration on `M^T M`.
///
/// Stops when the Rayleigh quotient changes by at most `rel_tol` relative,
/// or after `max_iter` iterations.
pub fn operator_norm(
    m: &SparseSignMatrix,
    rel_tol: f64,
    max_iter: usize,
    seed: u64,
) -> OpNormEstimate {
    let mut rng = stream_rng(seed, 0);
    let mut v: Vec<f64> = (0..m.n_cols())
        .map(|_| StandardNormal.sample(&mut rng))
        .collect();
    let nv = norm2(&v);
    v.iter_mut().for_each(|x| *x /= nv);

    let mut lambda_prev = f64::NAN;
    for it in 1..=max_iter {
        let w = m.apply_unchecked(&v);
        let lambda = w.iter().map(|x| x * x).sum::<f64>();
        if lambda == 0.0 {
            return OpNormEstimate {
                norm: 0.0,
                iterations: it,
                converged: true,
            };
        }
        if (lambda - lambda_prev).abs() <= rel_tol * lambda {
            return OpNormEstimate {
                norm: lambda.sqrt(),
                iterations: it,
                converged: true,
            };
        }
        lambda_prev = lambda;
        let z = m.apply_transpose_unchecked(&w);
        let nz = norm2(&z);
        v = z.into_iter().map(|x| x / nz).collect();
    }
    OpNormEstimate {
        norm: lambda_prev.sqrt(),
        iterations: max_iter,
        converged: false,
    }
}
