//! The transform `s -> c_k(M s)`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::cap::cap;
use crate::error::{check_finite, Error, Result};
use crate::matrix::{validate_p, SparseSignMatrix};

/// Everything needed to reproduce one transform.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransformConfig {
    /// Input dimension `m`.
    pub input_dim: usize,
    /// Projection dimension `n`.
    pub output_dim: usize,
    pub bernoulli_p: f64,
    /// Entries kept after projection; `cap_k == output_dim` disables capping.
    pub cap_k: usize,
    pub seed: u64,
}

impl TransformConfig {
    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.output_dim == 0 {
            return Err(Error::invalid("transform dimensions must be positive"));
        }
        validate_p(self.bernoulli_p)?;
        if self.cap_k > self.output_dim {
            return Err(Error::invalid(format!(
                "cap k = {} exceeds output dimension {}",
                self.cap_k, self.output_dim
            )));
        }
        Ok(())
    }

    /// Flat `key=value` block with keys m, n, p, k, seed.
    pub fn to_kv(&self) -> String {
        self.to_string()
    }

    pub fn from_kv(text: &str) -> Result<Self> {
        let mut m = None;
        let mut n = None;
        let mut p = None;
        let mut k = None;
        let mut seed = None;
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |msg: String| Error::Parse {
                path: "<transform config>".into(),
                line: i + 1,
                msg,
            };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected key=value, got `{line}`")))?;
            let value = value.trim();
            let bad = || err(format!("bad value for {}: `{value}`", key.trim()));
            match key.trim() {
                "m" => m = Some(value.parse().map_err(|_| bad())?),
                "n" => n = Some(value.parse().map_err(|_| bad())?),
                "p" => p = Some(value.parse().map_err(|_| bad())?),
                "k" => k = Some(value.parse().map_err(|_| bad())?),
                "seed" => seed = Some(value.parse().map_err(|_| bad())?),
                other => return Err(err(format!("unknown key `{other}`"))),
            }
        }
        let missing = |key: &str| Error::invalid(format!("transform config is missing `{key}`"));
        let config = Self {
            input_dim: m.ok_or_else(|| missing("m"))?,
            output_dim: n.ok_or_else(|| missing("n"))?,
            bernoulli_p: p.ok_or_else(|| missing("p"))?,
            cap_k: k.ok_or_else(|| missing("k"))?,
            seed: seed.ok_or_else(|| missing("seed"))?,
        };
        config.validate()?;
        Ok(config)
    }
}

impl fmt::Display for TransformConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "m={}", self.input_dim)?;
        writeln!(f, "n={}", self.output_dim)?;
        writeln!(f, "p={}", self.bernoulli_p)?;
        writeln!(f, "k={}", self.cap_k)?;
        writeln!(f, "seed={}", self.seed)
    }
}

/// A built transform. Immutable; `forward` may be called from many threads.
#[derive(Debug, Clone)]
pub struct Transform {
    config: TransformConfig,
    matrix: SparseSignMatrix,
}

impl Transform {
    pub fn build(config: TransformConfig) -> Result<Self> {
        config.validate()?;
        let matrix = SparseSignMatrix::sample(
            config.output_dim,
            config.input_dim,
            config.bernoulli_p,
            config.seed,
        )?;
        Ok(Self { config, matrix })
    }

    pub fn config(&self) -> &TransformConfig {
        &self.config
    }

    pub fn matrix(&self) -> &SparseSignMatrix {
        &self.matrix
    }

    /// Projection without the cap.
    pub fn project(&self, s: &[f64]) -> Result<Vec<f64>> {
        self.matrix.apply(s)
    }

    pub fn forward(&self, s: &[f64]) -> Result<Vec<f64>> {
        let projected = self.matrix.apply(s)?;
        Ok(cap(&projected, self.config.cap_k)?.vector)
    }

    /// Row-wise `forward`; row order is preserved.
    pub fn forward_batch(&self, rows: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        for (i, row) in rows.iter().enumerate() {
            if row.len() != self.config.input_dim {
                return Err(Error::DimensionMismatch {
                    expected: self.config.input_dim,
                    actual: row.len(),
                }
                .with_context(format!("row {i}")));
            }
            check_finite(row).map_err(|e| e.with_context(format!("row {i}")))?;
        }
        use rayon::prelude::*;
        rows.par_iter().map(|row| self.forward(row)).collect()
    }
}
