//! The random projection matrix.
//!
//! Entries are i.i.d. copies of `X - Y` with `X, Y ~ Bernoulli(p)`, so each
//! entry is `+1` or `-1` with probability `p(1-p)` and `0` otherwise. Only the
//! nonzero entries are stored, row by row.

use std::io::{BufRead, Write};

use rand::Rng;
use rayon::prelude::*;

use crate::error::{check_finite, Error, Result};
use crate::rng::stream_rng;

/// Rows above this many positions are sampled in parallel.
const PARALLEL_THRESHOLD: usize = 1 << 16;

#[derive(Debug, Clone, PartialEq)]
pub struct SparseSignMatrix {
    n_rows: usize,
    n_cols: usize,
    p: f64,
    seed: u64,
    row_ptr: Vec<usize>,
    col_idx: Vec<u32>,
    values: Vec<i8>,
}

/// Empirical moments over all `n_rows * n_cols` positions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EntryStats {
    pub zero_fraction: f64,
    pub mean: f64,
    pub variance: f64,
    pub sample_count: usize,
}

fn validate_shape(n_rows: usize, n_cols: usize) -> Result<()> {
    if n_rows == 0 || n_cols == 0 {
        return Err(Error::invalid(format!(
            "matrix dimensions must be positive, got {n_rows}x{n_cols}"
        )));
    }
    if n_rows.checked_mul(n_cols).is_none() {
        return Err(Error::invalid(format!(
            "{n_rows}x{n_cols} overflows the index type"
        )));
    }
    if u32::try_from(n_cols).is_err() {
        return Err(Error::invalid(format!("too many columns: {n_cols}")));
    }
    Ok(())
}

pub(crate) fn validate_p(p: f64) -> Result<()> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::invalid(format!(
            "Bernoulli parameter must lie in (0, 1), got {p}"
        )));
    }
    Ok(())
}

fn sample_row(n_cols: usize, q: f64, seed: u64, row: usize) -> (Vec<u32>, Vec<i8>) {
    let mut rng = stream_rng(seed, row as u64);
    let mut cols = Vec::new();
    let mut vals = Vec::new();
    for j in 0..n_cols {
        let u: f64 = rng.random();
        if u < q {
            cols.push(j as u32);
            vals.push(1);
        } else if u < 2.0 * q {
            cols.push(j as u32);
            vals.push(-1);
        }
    }
    (cols, vals)
}

impl SparseSignMatrix {
    /// Sample an `n_rows x n_cols` difference-of-Bernoulli matrix.
    ///
    /// Row `i` is drawn from its own stream of `seed`, so the result does not
    /// depend on how many threads did the sampling.
    pub fn sample(n_rows: usize, n_cols: usize, p: f64, seed: u64) -> Result<Self> {
        validate_shape(n_rows, n_cols)?;
        validate_p(p)?;
        let q = p * (1.0 - p);
        let rows: Vec<(Vec<u32>, Vec<i8>)> = if n_rows * n_cols >= PARALLEL_THRESHOLD {
            (0..n_rows)
                .into_par_iter()
                .map(|i| sample_row(n_cols, q, seed, i))
                .collect()
        } else {
            (0..n_rows)
                .map(|i| sample_row(n_cols, q, seed, i))
                .collect()
        };
        let nnz = rows.iter().map(|(c, _)| c.len()).sum();
        let mut row_ptr = Vec::with_capacity(n_rows + 1);
        let mut col_idx = Vec::with_capacity(nnz);
        let mut values = Vec::with_capacity(nnz);
        row_ptr.push(0);
        for (c, v) in rows {
            col_idx.extend_from_slice(&c);
            values.extend_from_slice(&v);
            row_ptr.push(col_idx.len());
        }
        Ok(Self {
            n_rows,
            n_cols,
            p,
            seed,
            row_ptr,
            col_idx,
            values,
        })
    }

    /// Build a matrix from explicit `(row, col, value)` triplets.
    ///
    /// Triplets may arrive in any order; values must be `+1` or `-1` and each
    /// position may appear at most once.
    pub fn from_triplets(
        n_rows: usize,
        n_cols: usize,
        p: f64,
        seed: u64,
        triplets: &[(usize, usize, i8)],
    ) -> Result<Self> {
        validate_shape(n_rows, n_cols)?;
        validate_p(p)?;
        let mut sorted = triplets.to_vec();
        sorted.sort_unstable_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = vec![0usize; n_rows + 1];
        let mut col_idx = Vec::with_capacity(sorted.len());
        let mut values = Vec::with_capacity(sorted.len());
        for (idx, &(r, c, v)) in sorted.iter().enumerate() {
            if r >= n_rows || c >= n_cols {
                return Err(Error::InvalidIndex(format!(
                    "entry ({r}, {c}) outside {n_rows}x{n_cols}"
                )));
            }
            if v != 1 && v != -1 {
                return Err(Error::invalid(format!(
                    "entry ({r}, {c}) has value {v}; stored values must be +1 or -1"
                )));
            }
            if idx > 0 && sorted[idx - 1].0 == r && sorted[idx - 1].1 == c {
                return Err(Error::InvalidIndex(format!("duplicate entry ({r}, {c})")));
            }
            row_ptr[r + 1] += 1;
            col_idx.push(c as u32);
            values.push(v);
        }
        for i in 0..n_rows {
            row_ptr[i + 1] += row_ptr[i];
        }
        Ok(Self {
            n_rows,
            n_cols,
            p,
            seed,
            row_ptr,
            col_idx,
            values,
        })
    }

    /// Build from a dense row-major matrix with entries in {-1, 0, 1}.
    pub fn from_dense(rows: &[Vec<i8>], p: f64, seed: u64) -> Result<Self> {
        let n_cols = rows.first().map_or(0, Vec::len);
        let mut triplets = Vec::new();
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n_cols {
                return Err(Error::DimensionMismatch {
                    expected: n_cols,
                    actual: row.len(),
                });
            }
            triplets.extend(
                row.iter()
                    .enumerate()
                    .filter(|(_, &v)| v != 0)
                    .map(|(j, &v)| (i, j, v)),
            );
        }
        Self::from_triplets(rows.len(), n_cols, p, seed, &triplets)
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Number of stored (nonzero) entries.
    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Column indices and values of row `i`.
    pub fn row(&self, i: usize) -> (&[u32], &[i8]) {
        let (a, b) = (self.row_ptr[i], self.row_ptr[i + 1]);
        (&self.col_idx[a..b], &self.values[a..b])
    }

    /// Iterate over stored entries as `(row, col, value)`.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, i8)> + '_ {
        (0..self.n_rows).flat_map(move |i| {
            let (cols, vals) = self.row(i);
            cols.iter()
                .zip(vals)
                .map(move |(&c, &v)| (i, c as usize, v))
        })
    }

    /// `M x`.
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.n_cols {
            return Err(Error::DimensionMismatch {
                expected: self.n_cols,
                actual: x.len(),
            });
        }
        check_finite(x)?;
        Ok(self.apply_unchecked(x))
    }

    pub(crate) fn apply_unchecked(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n_rows)
            .map(|i| {
                let (cols, vals) = self.row(i);
                cols.iter().zip(vals).fold(0.0, |acc, (&c, &v)| {
                    if v > 0 {
                        acc + x[c as usize]
                    } else {
                        acc - x[c as usize]
                    }
                })
            })
            .collect()
    }

    /// `M^T y`.
    pub fn apply_transpose(&self, y: &[f64]) -> Result<Vec<f64>> {
        if y.len() != self.n_rows {
            return Err(Error::DimensionMismatch {
                expected: self.n_rows,
                actual: y.len(),
            });
        }
        check_finite(y)?;
        Ok(self.apply_transpose_unchecked(y))
    }

    pub(crate) fn apply_transpose_unchecked(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_cols];
        for (i, &yi) in y.iter().enumerate() {
            if yi == 0.0 {
                continue;
            }
            let (cols, vals) = self.row(i);
            for (&c, &v) in cols.iter().zip(vals) {
                if v > 0 {
                    out[c as usize] += yi;
                } else {
                    out[c as usize] -= yi;
                }
            }
        }
        out
    }

    pub fn entry_stats(&self) -> EntryStats {
        let total = self.n_rows * self.n_cols;
        let nnz = self.nnz();
        let sum: i64 = self.values.iter().map(|&v| i64::from(v)).sum();
        let mean = sum as f64 / total as f64;
        // entries are in {-1, 0, 1}, so E[x^2] is the nonzero fraction
        let second = nnz as f64 / total as f64;
        EntryStats {
            zero_fraction: 1.0 - second,
            mean,
            variance: (second - mean * mean).max(0.0),
            sample_count: total,
        }
    }

    /// Extract the given rows, in the given order.
    pub fn submatrix(&self, row_indices: &[usize]) -> Result<Self> {
        if row_indices.is_empty() {
            return Err(Error::invalid("row selection is empty"));
        }
        let mut seen = vec![false; self.n_rows];
        for &r in row_indices {
            if r >= self.n_rows {
                return Err(Error::InvalidIndex(format!(
                    "row {r} out of range for {} rows",
                    self.n_rows
                )));
            }
            if std::mem::replace(&mut seen[r], true) {
                return Err(Error::InvalidIndex(format!("row {r} selected twice")));
            }
        }
        let mut row_ptr = Vec::with_capacity(row_indices.len() + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for &r in row_indices {
            let (c, v) = self.row(r);
            col_idx.extend_from_slice(c);
            values.extend_from_slice(v);
            row_ptr.push(col_idx.len());
        }
        Ok(Self {
            n_rows: row_indices.len(),
            n_cols: self.n_cols,
            p: self.p,
            seed: self.seed,
            row_ptr,
            col_idx,
            values,
        })
    }

    /// Dense row-major copy.
    pub fn to_dense(&self) -> Vec<Vec<i8>> {
        let mut out = vec![vec![0i8; self.n_cols]; self.n_rows];
        for (i, j, v) in self.triplets() {
            out[i][j] = v;
        }
        out
    }

    /// Text dump: a header line `n m p seed`, then one `row col value` line
    /// per stored entry.
    pub fn write_text<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(
            w,
            "{} {} {} {}",
            self.n_rows, self.n_cols, self.p, self.seed
        )?;
        for (i, j, v) in self.triplets() {
            writeln!(w, "{i} {j} {v}")?;
        }
        Ok(())
    }

    pub fn read_text<R: BufRead>(r: R) -> Result<Self> {
        let parse_err = |line: usize, msg: String| Error::Parse {
            path: "<matrix>".into(),
            line,
            msg,
        };
        let mut lines = r.lines().enumerate();
        let header = loop {
            match lines.next() {
                Some((_, Ok(l))) if l.trim().is_empty() => continue,
                Some((_, Ok(l))) => break l,
                Some((i, Err(e))) => return Err(parse_err(i + 1, e.to_string())),
                None => return Err(parse_err(1, "missing header".into())),
            }
        };
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() != 4 {
            return Err(parse_err(
                1,
                format!("expected `n m p seed`, got `{header}`"),
            ));
        }
        let bad = |what: &str| parse_err(1, format!("bad {what} in header"));
        let n_rows: usize = fields[0].parse().map_err(|_| bad("n"))?;
        let n_cols: usize = fields[1].parse().map_err(|_| bad("m"))?;
        let p: f64 = fields[2].parse().map_err(|_| bad("p"))?;
        let seed: u64 = fields[3].parse().map_err(|_| bad("seed"))?;
        let mut triplets = Vec::new();
        for (i, line) in lines {
            let line = line.map_err(|e| parse_err(i + 1, e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.split_whitespace().collect();
            let entry = match parts.as_slice() {
                [r, c, v] => (r.parse(), c.parse(), v.parse()),
                _ => {
                    return Err(parse_err(
                        i + 1,
                        format!("expected `row col value`, got `{line}`"),
                    ))
                }
            };
            match entry {
                (Ok(r), Ok(c), Ok(v)) => triplets.push((r, c, v)),
                _ => return Err(parse_err(i + 1, format!("malformed entry `{line}`"))),
            }
        }
        Self::from_triplets(n_rows, n_cols, p, seed, &triplets)
    }
}
