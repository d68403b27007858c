//! Monte Carlo suites that check the probabilistic and deterministic
//! guarantees of the projection and the cap empirically.
//!
//! Every trial draws from a seed derived from `(config seed, suite, grid
//! point, trial index)`, and per-trial outcomes are reduced in trial order, so
//! results do not depend on the worker count.

pub mod linalg;
pub mod rank;
mod suites;

use std::fmt::Write as _;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::matrix::validate_p;

pub use suites::{
    cap_bound_sweep, det_bound_incidence, distance_ratio, entry_distribution, invertibility_curve,
    jl_preservation, opnorm_envelope, opnorm_scaling,
};

/// Monte Carlo configuration shared by the suites.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McConfig {
    pub trials: usize,
    pub seed: u64,
    pub p: f64,
    /// Dimension grid for suites that sweep one (the `m` values of the
    /// invertibility curve).
    pub grid: Vec<usize>,
    pub epsilon: f64,
    /// Results do not depend on this, so it is left out of serialized output.
    #[serde(skip)]
    pub workers: usize,
    /// Record wall-clock time in results. Off by default so outputs are
    /// byte-reproducible.
    #[serde(skip)]
    pub record_timing: bool,
}

impl Default for McConfig {
    fn default() -> Self {
        Self {
            trials: 1000,
            seed: 42,
            p: 0.05,
            grid: (1..=128).collect(),
            epsilon: 0.5,
            workers: std::thread::available_parallelism().map_or(1, |n| n.get()),
            record_timing: false,
        }
    }
}

impl McConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::invalid("trials must be at least 1"));
        }
        if self.workers == 0 {
            return Err(Error::invalid("workers must be at least 1"));
        }
        validate_p(self.p)?;
        validate_grid(&self.grid)?;
        Ok(())
    }

    pub(crate) fn pool(&self) -> Result<rayon::ThreadPool> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.workers)
            .build()
            .map_err(|e| Error::invalid(format!("thread pool: {e}")))
    }
}

pub(crate) fn validate_grid(grid: &[usize]) -> Result<()> {
    if !grid.windows(2).all(|w| w[0] < w[1]) {
        return Err(Error::invalid("grid must be strictly increasing"));
    }
    Ok(())
}

/// One grid point of a suite.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteRecord {
    pub label: String,
    pub m: Option<usize>,
    pub n: Option<usize>,
    /// Norm exponent, where the check is indexed by one.
    pub norm: Option<f64>,
    pub trials: usize,
    pub estimate: f64,
    pub stderr: f64,
    /// The oracle value the estimate is judged against.
    pub bound: Option<f64>,
    pub max_value: Option<f64>,
    /// Suite-specific count of bad events (singular draws, band exits,
    /// inequality violations, ...).
    pub failures: usize,
    pub pass: bool,
}

impl SuiteRecord {
    pub(crate) fn new(label: &str, trials: usize) -> Self {
        Self {
            label: label.to_string(),
            m: None,
            n: None,
            norm: None,
            trials,
            estimate: 0.0,
            stderr: 0.0,
            bound: None,
            max_value: None,
            failures: 0,
            pass: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteResult {
    /// Command line that produced the result, if any.
    pub invocation: Option<String>,
    pub suite: String,
    pub config: McConfig,
    pub records: Vec<SuiteRecord>,
    pub pass: bool,
    pub wall_seconds: Option<f64>,
}

impl SuiteResult {
    pub(crate) fn new(suite: &str, config: &McConfig, records: Vec<SuiteRecord>) -> Self {
        let pass = records.iter().all(|r| r.pass);
        Self {
            invocation: None,
            suite: suite.to_string(),
            config: config.clone(),
            records,
            pass,
            wall_seconds: None,
        }
    }

    pub fn record(&self, label: &str, m: Option<usize>, n: Option<usize>) -> Option<&SuiteRecord> {
        self.records
            .iter()
            .find(|r| r.label == label && (m.is_none() || r.m == m) && (n.is_none() || r.n == n))
    }

    /// One row per record. Starts with a `#` line carrying the invocation
    /// when one is set.
    pub fn to_csv(&self) -> String {
        fn opt<T: std::fmt::Display>(v: Option<T>) -> String {
            v.map_or_else(String::new, |x| x.to_string())
        }
        let mut out = String::new();
        if let Some(inv) = &self.invocation {
            let _ = writeln!(out, "# {inv}");
        }
        out.push_str(
            "suite,label,m,n,norm,p,epsilon,trials,estimate,stderr,bound,max_value,failures,pass\n",
        );
        for r in &self.records {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                self.suite,
                r.label,
                opt(r.m),
                opt(r.n),
                opt(r.norm),
                self.config.p,
                self.config.epsilon,
                r.trials,
                r.estimate,
                r.stderr,
                opt(r.bound),
                opt(r.max_value),
                r.failures,
                r.pass
            );
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }
}

/// `sqrt(q (1 - q) / trials)`.
pub fn binomial_stderr(q: f64, trials: usize) -> f64 {
    (q * (1.0 - q) / trials as f64).sqrt()
}
