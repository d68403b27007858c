//! Classification sweeps: noise, transform, split, standardize, train,
//! evaluate, repeated over a grid of transform settings.
//!
//! Seeds:
//! - noise: `(seed, repeat, sigma)`, so every variant at one noise level
//!   sees the same noisy data within a repeat;
//! - transform: `(seed, grid index, repeat)`, a fresh matrix per repeat;
//! - split and training: `(seed, repeat)`.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifier::{evaluate, train, TrainSpec};
use crate::dataset::{
    add_noise, load_csv, split, standardize, FeatureDataset, SplitSpec, SynthSpec,
};
use crate::error::{Error, Result};
use crate::rng::derive_seed;
use crate::transform::{Transform, TransformConfig};

const TAG_NOISE: u64 = 11;
const TAG_TRANSFORM: u64 = 12;
const TAG_SPLIT: u64 = 13;
const TAG_TRAIN: u64 = 14;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetSource {
    Synth(SynthSpec),
    Csv(PathBuf),
}

impl DatasetSource {
    pub fn load(&self) -> Result<FeatureDataset> {
        match self {
            DatasetSource::Synth(s) => crate::dataset::synth_blobs(s),
            DatasetSource::Csv(p) => load_csv(p),
        }
    }
}

/// What happens to the features before classification.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Variant {
    NoTransform,
    /// Projection only.
    Projection {
        p: f64,
        n: usize,
    },
    Capped {
        p: f64,
        n: usize,
        k: usize,
    },
}

impl Variant {
    pub fn p(&self) -> Option<f64> {
        match *self {
            Variant::NoTransform => None,
            Variant::Projection { p, .. } | Variant::Capped { p, .. } => Some(p),
        }
    }

    pub fn n(&self) -> Option<usize> {
        match *self {
            Variant::NoTransform => None,
            Variant::Projection { n, .. } | Variant::Capped { n, .. } => Some(n),
        }
    }

    pub fn k(&self) -> Option<usize> {
        match *self {
            Variant::Capped { k, .. } => Some(k),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Variant::NoTransform => "raw",
            Variant::Projection { .. } => "projection",
            Variant::Capped { .. } => "capped",
        }
    }

    fn transform_config(&self, input_dim: usize, seed: u64) -> Option<TransformConfig> {
        let (p, n, k) = match *self {
            Variant::NoTransform => return None,
            Variant::Projection { p, n } => (p, n, n),
            Variant::Capped { p, n, k } => (p, n, k),
        };
        Some(TransformConfig {
            input_dim,
            output_dim: n,
            bernoulli_p: p,
            cap_k: k,
            seed,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub variant: Variant,
    pub noise_sigma: f64,
}

impl GridPoint {
    pub fn new(variant: Variant, noise_sigma: f64) -> Self {
        Self {
            variant,
            noise_sigma,
        }
    }

    fn is_baseline(&self) -> bool {
        self.variant == Variant::NoTransform && self.noise_sigma == 0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub dataset: DatasetSource,
    pub grid: Vec<GridPoint>,
    pub repeats: usize,
    pub split: SplitSpec,
    pub train: TrainSpec,
    pub seed: u64,
    /// Record training wall time. Off by default so reports are
    /// byte-reproducible.
    #[serde(skip)]
    pub record_timing: bool,
}

impl SweepSpec {
    pub fn new(dataset: DatasetSource, grid: Vec<GridPoint>) -> Self {
        Self {
            dataset,
            grid,
            repeats: 5,
            split: SplitSpec::default(),
            train: TrainSpec::default(),
            seed: 42,
            record_timing: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid.is_empty() {
            return Err(Error::invalid("sweep grid is empty"));
        }
        if self.repeats == 0 {
            return Err(Error::invalid("repeats must be at least 1"));
        }
        self.train.validate()?;
        for (i, g) in self.grid.iter().enumerate() {
            let ctx = |e: Error| e.with_context(format!("grid point {i}"));
            if !(g.noise_sigma >= 0.0) || !g.noise_sigma.is_finite() {
                return Err(ctx(Error::invalid(format!(
                    "noise sigma {}",
                    g.noise_sigma
                ))));
            }
            if let Some(cfg) = g.variant.transform_config(1, 0) {
                cfg.validate().map_err(ctx)?;
            }
        }
        Ok(())
    }
}

/// Built-in grids mirroring the four experiment families plus the baseline.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Baseline,
    /// Bernoulli parameter sweep without cap, `n` in {433, 2000}.
    P,
    /// Projection dimension 433..=2833 step 100, `p = 0.05`, no cap.
    N,
    /// Cap sweep at `n` in {433, 2000}, `p = 0.05`.
    K,
    /// Noise sweep over raw, projected (`n = 2000`) and capped (`k = 200`).
    Noise,
}

pub const PRESET_P_VALUES: [f64; 7] = [0.01, 0.05, 0.1, 0.2, 0.3, 0.4, 0.5];
pub const PRESET_K_VALUES: [usize; 12] = [0, 1, 2, 5, 10, 20, 50, 100, 150, 200, 300, 433];
pub const PRESET_NOISE_SIGMAS: [f64; 7] = [0.0, 0.25, 0.5, 1.0, 1.5, 2.0, 3.0];

impl Preset {
    pub fn grid(&self) -> Vec<GridPoint> {
        let raw = GridPoint::new(Variant::NoTransform, 0.0);
        match self {
            Preset::Baseline => vec![raw],
            Preset::P => [433, 2000]
                .iter()
                .flat_map(|&n| {
                    PRESET_P_VALUES
                        .iter()
                        .map(move |&p| GridPoint::new(Variant::Projection { p, n }, 0.0))
                })
                .collect(),
            Preset::N => (433..=2833)
                .step_by(100)
                .map(|n| GridPoint::new(Variant::Projection { p: 0.05, n }, 0.0))
                .collect(),
            Preset::K => [433, 2000]
                .iter()
                .flat_map(|&n| {
                    PRESET_K_VALUES
                        .iter()
                        .filter(move |&&k| k <= n)
                        .map(move |&k| GridPoint::new(Variant::Capped { p: 0.05, n, k }, 0.0))
                })
                .collect(),
            Preset::Noise => PRESET_NOISE_SIGMAS
                .iter()
                .flat_map(|&s| {
                    [
                        Variant::NoTransform,
                        Variant::Projection { p: 0.05, n: 2000 },
                        Variant::Capped {
                            p: 0.05,
                            n: 2000,
                            k: 200,
                        },
                    ]
                    .map(|v| GridPoint::new(v, s))
                })
                .collect(),
        }
    }

    pub fn axis(&self) -> Axis {
        match self {
            Preset::Baseline | Preset::Noise => Axis::Noise,
            Preset::P => Axis::P,
            Preset::N => Axis::N,
            Preset::K => Axis::K,
        }
    }
}

impl std::str::FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "baseline" => Ok(Preset::Baseline),
            "p" => Ok(Preset::P),
            "n" => Ok(Preset::N),
            "k" => Ok(Preset::K),
            "noise" => Ok(Preset::Noise),
            other => Err(Error::invalid(format!(
                "unknown grid `{other}` (expected baseline, p, n, k or noise)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Baseline {
    pub acc_mean: f64,
    pub acc_std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub p: Option<f64>,
    pub n: Option<usize>,
    pub k: Option<usize>,
    pub sigma: f64,
    pub variant: String,
    pub acc_mean: f64,
    pub acc_std: f64,
    pub repeats: usize,
    /// Mean training time per repeat; only with `record_timing`.
    pub train_seconds: Option<f64>,
    /// Mean fraction of nonzero transformed feature entries.
    pub sparsity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub invocation: Option<String>,
    pub spec: SweepSpec,
    pub baseline: Baseline,
    pub records: Vec<SweepRecord>,
}

impl ExperimentReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }
}

struct RunOutcome {
    accuracy: f64,
    train_seconds: f64,
    density: f64,
}

fn run_once(
    base: &FeatureDataset,
    spec: &SweepSpec,
    grid_index: usize,
    point: &GridPoint,
    repeat: usize,
) -> Result<RunOutcome> {
    let r = repeat as u64;
    let noisy = add_noise(
        base,
        point.noise_sigma,
        derive_seed(spec.seed, &[TAG_NOISE, r, point.noise_sigma.to_bits()]),
    )?;
    let features = match point.variant.transform_config(
        base.dim(),
        derive_seed(spec.seed, &[TAG_TRANSFORM, grid_index as u64, r]),
    ) {
        Some(cfg) => {
            noisy.with_features(Transform::build(cfg)?.forward_batch(noisy.features())?)?
        }
        None => noisy,
    };
    let density = features.density();
    let split_spec = SplitSpec {
        seed: derive_seed(spec.split.seed, &[TAG_SPLIT, r]),
        ..spec.split
    };
    let (tr, te) = split(&features, &split_spec)?;
    let (tr, te, _) = standardize(&tr, &te)?;
    let train_spec = TrainSpec {
        seed: derive_seed(spec.train.seed, &[TAG_TRAIN, r]),
        ..spec.train
    };
    let start = Instant::now();
    let model = train(&tr, &train_spec)?;
    let train_seconds = start.elapsed().as_secs_f64();
    Ok(RunOutcome {
        accuracy: evaluate(&model, &te)?,
        train_seconds,
        density,
    })
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 {
        xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

fn summarize(point: &GridPoint, runs: &[RunOutcome], record_timing: bool) -> SweepRecord {
    let accs: Vec<f64> = runs.iter().map(|r| r.accuracy).collect();
    let (acc_mean, acc_std) = mean_std(&accs);
    let n = runs.len() as f64;
    SweepRecord {
        p: point.variant.p(),
        n: point.variant.n(),
        k: point.variant.k(),
        sigma: point.noise_sigma,
        variant: point.variant.name().to_string(),
        acc_mean,
        acc_std,
        repeats: runs.len(),
        train_seconds: record_timing.then(|| runs.iter().map(|r| r.train_seconds).sum::<f64>() / n),
        sparsity: runs.iter().map(|r| r.density).sum::<f64>() / n,
    }
}

/// Run every grid point `spec.repeats` times. The raw, noiseless baseline
/// is computed once and reused when it also appears in the grid.
pub fn run_sweep(spec: &SweepSpec) -> Result<ExperimentReport> {
    spec.validate()?;
    let base = spec.dataset.load()?;
    let baseline_point = GridPoint::new(Variant::NoTransform, 0.0);

    let mut points: Vec<(usize, GridPoint)> = spec.grid.iter().copied().enumerate().collect();
    let baseline_in_grid = spec.grid.iter().position(GridPoint::is_baseline);
    if baseline_in_grid.is_none() {
        points.push((spec.grid.len(), baseline_point));
    }
    let jobs: Vec<(usize, usize)> = (0..points.len())
        .flat_map(|j| (0..spec.repeats).map(move |r| (j, r)))
        .collect();
    let outcomes: Vec<RunOutcome> = jobs
        .par_iter()
        .map(|&(j, r)| {
            let (gi, point) = points[j];
            run_once(&base, spec, gi, &point, r).map_err(|e| {
                e.with_context(format!(
                    "grid point {gi} ({}, sigma {}), repeat {r}",
                    point.variant.name(),
                    point.noise_sigma
                ))
            })
        })
        .collect::<Result<_>>()?;

    let mut summaries: Vec<SweepRecord> = outcomes
        .chunks(spec.repeats)
        .zip(&points)
        .map(|(runs, (_, point))| summarize(point, runs, spec.record_timing))
        .collect();
    let baseline_record = match baseline_in_grid {
        Some(i) => summaries[i].clone(),
        None => summaries.pop().expect("baseline summary"),
    };
    Ok(ExperimentReport {
        invocation: None,
        spec: spec.clone(),
        baseline: Baseline {
            acc_mean: baseline_record.acc_mean,
            acc_std: baseline_record.acc_std,
        },
        records: summaries,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    P,
    N,
    K,
    Noise,
}

impl Axis {
    pub fn name(&self) -> &'static str {
        match self {
            Axis::P => "p",
            Axis::N => "n",
            Axis::K => "k",
            Axis::Noise => "sigma",
        }
    }

    fn value(&self, r: &SweepRecord) -> Option<f64> {
        match self {
            Axis::P => r.p,
            Axis::N => r.n.map(|n| n as f64),
            Axis::K => r.k.map(|k| k as f64),
            Axis::Noise => Some(r.sigma),
        }
    }
}

impl std::str::FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "p" => Ok(Axis::P),
            "n" => Ok(Axis::N),
            "k" => Ok(Axis::K),
            "noise" | "sigma" => Ok(Axis::Noise),
            other => Err(Error::invalid(format!("unknown axis `{other}`"))),
        }
    }
}

/// Variant label built from every parameter except the axis, e.g.
/// `capped;p=0.05;n=2000` on the `k` axis.
fn variant_label(r: &SweepRecord, axis: Axis) -> String {
    let mut label = r.variant.clone();
    if let (Some(p), true) = (r.p, axis != Axis::P) {
        let _ = write!(label, ";p={p}");
    }
    if let (Some(n), true) = (r.n, axis != Axis::N) {
        let _ = write!(label, ";n={n}");
    }
    if let (Some(k), true) = (r.k, axis != Axis::K) {
        let _ = write!(label, ";k={k}");
    }
    if axis != Axis::Noise && r.sigma != 0.0 {
        let _ = write!(label, ";sigma={}", r.sigma);
    }
    label
}

/// Tidy CSV with one row per (axis value, variant), in report order.
pub fn fig_tables(report: &ExperimentReport, axis: Axis) -> Result<String> {
    if report.records.is_empty() {
        return Err(Error::Empty("report has no records".into()));
    }
    let rows: Vec<(f64, &SweepRecord)> = report
        .records
        .iter()
        .filter_map(|r| axis.value(r).map(|v| (v, r)))
        .collect();
    if rows.is_empty() {
        return Err(Error::invalid(format!(
            "axis `{}` is absent from the report",
            axis.name()
        )));
    }
    let mut out = String::new();
    if let Some(inv) = &report.invocation {
        let _ = writeln!(out, "# {inv}");
    }
    let _ = writeln!(out, "{},variant,acc_mean,acc_std,repeats", axis.name());
    for (v, r) in rows {
        let _ = writeln!(
            out,
            "{v},{},{},{},{}",
            variant_label(r, axis),
            r.acc_mean,
            r.acc_std,
            r.repeats
        );
    }
    Ok(out)
}
