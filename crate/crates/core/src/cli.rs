//! Command-line front end.
//!
//! Exit codes: 0 success, 1 invalid input or I/O failure (one line on
//! stderr), 2 a `verify` suite ran but did not pass.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::bounds::{
    capped_residual_bound, det_lower_threshold, entry_moments, jl_success_bound, jl_tail_terms,
    BoundSpec,
};
use crate::classifier::TrainSpec;
use crate::dataset::{load_csv, synth_blobs, FeatureDataset, SplitSpec, SynthSpec};
use crate::error::{Error, Result};
use crate::experiments::{fig_tables, run_sweep, Axis, DatasetSource, Preset, SweepSpec};
use crate::output::write_atomic;
use crate::transform::{Transform, TransformConfig};
use crate::verify::{self, McConfig, SuiteResult};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_SUITE_FAILED: i32 = 2;

const DEFAULT_SEED: u64 = 42;

#[derive(Debug, Parser)]
#[command(
    name = "sparsecap",
    version,
    about = "Sparse sign projection with a top-k cap: transform, bounds, Monte Carlo checks and classification sweeps"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic Gaussian-blob dataset as CSV.
    Synth(SynthArgs),
    /// Apply the transform to every row of a feature CSV.
    Transform(TransformArgs),
    /// Evaluate closed-form bounds.
    #[command(subcommand)]
    Bounds(BoundsCommand),
    /// Run a Monte Carlo verification suite.
    Verify(VerifyArgs),
    /// Run a classification sweep.
    Sweep(SweepArgs),
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 10)]
    classes: usize,
    #[arg(long, default_value_t = 100)]
    per_class: usize,
    #[arg(long, default_value_t = 433)]
    dim: usize,
    #[arg(long, default_value_t = SynthSpec::default().center_scale)]
    center_scale: f64,
    #[arg(long, default_value_t = 1.0)]
    noise: f64,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Output CSV; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct TransformArgs {
    /// Input feature CSV (`label,v1,...,vm`); m is taken from the file.
    #[arg(long)]
    input: PathBuf,
    /// Projection dimension.
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0.05)]
    p: f64,
    /// Entries kept per row; no cap when omitted.
    #[arg(long)]
    k: Option<usize>,
    /// Expected input dimension; checked against the file.
    #[arg(long)]
    m: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum BoundsCommand {
    /// Zero probability, mean and variance of one matrix entry.
    Entry {
        #[arg(long)]
        p: f64,
    },
    /// Lower bound on the probability that one pair's distance is preserved.
    Jl {
        #[arg(long)]
        epsilon: f64,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        p: f64,
    },
    /// Log of the determinant lower threshold for an m x m sample.
    Det {
        #[arg(long)]
        m: usize,
        #[arg(long)]
        p: f64,
        #[arg(long)]
        epsilon: f64,
    },
    /// Upper bound on ||x - c_k(x)||_2 given ||x||_q.
    Cap {
        /// The value of ||x||_q.
        #[arg(long)]
        norm: f64,
        #[arg(long)]
        k: usize,
        /// Norm exponent q in (0, 2).
        #[arg(long)]
        q: f64,
    },
}

#[derive(Debug, Args)]
struct VerifyArgs {
    #[command(subcommand)]
    suite: Suite,
    #[command(flatten)]
    common: McArgs,
}

#[derive(Debug, Args)]
struct McArgs {
    #[arg(long, global = true)]
    trials: Option<usize>,
    #[arg(long, global = true, default_value_t = DEFAULT_SEED)]
    seed: u64,
    #[arg(long, global = true, default_value_t = 0.05)]
    p: f64,
    #[arg(long, global = true, default_value_t = 0.5)]
    epsilon: f64,
    /// Worker threads; all available cores when omitted.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Record wall-clock time in the outputs (makes them non-reproducible).
    #[arg(long, global = true)]
    timing: bool,
    /// Output path; both `<stem>.csv` and `<stem>.json` are written.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Suite {
    /// Entry distribution of one n x m sample.
    Entries {
        #[arg(long, default_value_t = 433)]
        m: usize,
        #[arg(long, default_value_t = 2000)]
        n: usize,
    },
    /// Fraction of invertible m x m samples over a grid of m.
    Invertibility {
        /// Grid of m, e.g. `1:128`, `10:100:10` or `1,2,5`.
        #[arg(long, default_value = "1:128")]
        m: String,
    },
    /// Pairwise distance preservation.
    Jl {
        #[arg(long, default_value_t = 50)]
        m: usize,
        #[arg(long, default_value_t = 2000)]
        n: usize,
    },
    /// Operator norm over a grid of n.
    Opnorm {
        #[arg(long, default_value_t = 100)]
        m: usize,
        #[arg(long, default_value = "500,1000,2000")]
        n: String,
    },
    /// Incidence of the determinant lower bound.
    Det {
        #[arg(long, default_value_t = 64)]
        m: usize,
    },
    /// Cap residual and norm-sandwich inequalities.
    Cap {
        #[arg(long, default_value_t = 2000)]
        length: usize,
    },
}

#[derive(Debug, Args)]
struct SweepArgs {
    /// `synth` or a path to a feature CSV.
    #[arg(long, default_value = "synth")]
    dataset: String,
    /// Preset grid: baseline, p, n, k or noise.
    #[arg(long, default_value = "baseline")]
    grid: String,
    #[arg(long, default_value_t = 5)]
    repeats: usize,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    #[arg(long, default_value_t = TrainSpec::default().lambda)]
    lambda: f64,
    #[arg(long, default_value_t = TrainSpec::default().epochs)]
    epochs: usize,
    #[arg(long, default_value_t = SplitSpec::default().train_fraction)]
    train_fraction: f64,
    /// Table axis; defaults to the preset's own axis.
    #[arg(long)]
    axis: Option<String>,
    #[arg(long)]
    timing: bool,
    /// Output path; both `<stem>.json` and `<stem>.csv` are written.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Parse `a:b[:step]` ranges and comma lists into a strictly increasing grid.
pub fn parse_grid(text: &str) -> Result<Vec<usize>> {
    let bad = || Error::invalid(format!("bad grid `{text}` (use a:b[:step] or a,b,c)"));
    let mut out = Vec::new();
    for part in text.split(',') {
        let fields: Vec<&str> = part.trim().split(':').collect();
        let num = |s: &str| s.trim().parse::<usize>().map_err(|_| bad());
        match fields.as_slice() {
            [v] => out.push(num(v)?),
            [a, b] | [a, b, _] => {
                let (a, b) = (num(a)?, num(b)?);
                let step = if fields.len() == 3 {
                    num(fields[2])?
                } else {
                    1
                };
                if step == 0 || a > b {
                    return Err(bad());
                }
                out.extend((a..=b).step_by(step));
            }
            _ => return Err(bad()),
        }
    }
    if out.is_empty() || !out.windows(2).all(|w| w[0] < w[1]) {
        return Err(Error::invalid(format!(
            "grid `{text}` must be nonempty and strictly increasing"
        )));
    }
    Ok(out)
}

/// `<stem>.csv` and `<stem>.json` next to `out`.
fn paired_paths(out: &Path) -> (PathBuf, PathBuf) {
    (out.with_extension("csv"), out.with_extension("json"))
}

fn invocation(args: &[String], seed: Option<u64>) -> String {
    let mut s = args.join(" ");
    if let Some(seed) = seed {
        s.push_str(&format!(" [seed={seed}]"));
    }
    s
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => write_atomic(p, text.as_bytes()),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn announce_seed(seed: u64) {
    eprintln!("seed: {seed}");
}

fn run_synth(a: SynthArgs, inv: &[String]) -> Result<()> {
    announce_seed(a.seed);
    let d = synth_blobs(&SynthSpec {
        num_classes: a.classes,
        per_class: a.per_class,
        dim: a.dim,
        center_scale: a.center_scale,
        noise_sigma: a.noise,
        seed: a.seed,
    })?;
    emit(
        a.out.as_deref(),
        &d.to_csv(Some(&invocation(inv, Some(a.seed)))),
    )
}

fn run_transform(a: TransformArgs, inv: &[String]) -> Result<()> {
    announce_seed(a.seed);
    let d = load_csv(&a.input)?;
    if let Some(m) = a.m {
        if m != d.dim() {
            return Err(Error::DimensionMismatch {
                expected: m,
                actual: d.dim(),
            }
            .with_context(format!("input dimension of {}", a.input.display())));
        }
    }
    let config = TransformConfig {
        input_dim: d.dim(),
        output_dim: a.n,
        bernoulli_p: a.p,
        cap_k: a.k.unwrap_or(a.n),
        seed: a.seed,
    };
    let t = Transform::build(config)?;
    let out: FeatureDataset = d.with_features(t.forward_batch(d.features())?)?;
    let header = format!(
        "{}\n{}",
        invocation(inv, Some(a.seed)),
        config.to_kv().trim_end().replace('\n', " ")
    );
    emit(a.out.as_deref(), &out.to_csv(Some(&header)))
}

fn run_bounds(b: BoundsCommand) -> Result<()> {
    match b {
        BoundsCommand::Entry { p } => {
            let e = entry_moments(p)?;
            println!(
                "zero_prob={}\nmean={}\nvariance={}",
                e.zero_prob, e.mean, e.variance
            );
        }
        BoundsCommand::Jl { epsilon, n, p } => {
            let spec = BoundSpec::new(epsilon, n, p)?;
            let bound = jl_success_bound(&spec)?;
            let (upper, lower) = jl_tail_terms(&spec);
            println!("{bound}");
            eprintln!("upper tail {upper:e}, lower tail {lower:e}");
        }
        BoundsCommand::Det { m, p, epsilon } => println!("{}", det_lower_threshold(m, p, epsilon)?),
        BoundsCommand::Cap { norm, k, q } => println!("{}", capped_residual_bound(norm, k, q)?),
    }
    Ok(())
}

fn run_verify(v: VerifyArgs, inv: &[String]) -> Result<bool> {
    let c = v.common;
    announce_seed(c.seed);
    let defaults = McConfig::default();
    let trials = c.trials.unwrap_or(match v.suite {
        Suite::Invertibility { .. } => 10_000,
        _ => defaults.trials,
    });
    let mut cfg = McConfig {
        trials,
        seed: c.seed,
        p: c.p,
        grid: Vec::new(),
        epsilon: c.epsilon,
        workers: c.workers.unwrap_or(defaults.workers),
        record_timing: c.timing,
    };
    let mut result: SuiteResult = match v.suite {
        Suite::Entries { m, n } => verify::entry_distribution(&cfg, m, n)?,
        Suite::Invertibility { m } => {
            cfg.grid = parse_grid(&m)?;
            verify::invertibility_curve(&cfg)?
        }
        Suite::Jl { m, n } => verify::jl_preservation(&cfg, m, n)?,
        Suite::Opnorm { m, n } => verify::opnorm_scaling(&cfg, m, &parse_grid(&n)?)?,
        Suite::Det { m } => verify::det_bound_incidence(&cfg, m, c.epsilon)?,
        Suite::Cap { length } => verify::cap_bound_sweep(&cfg, length)?,
    };
    result.invocation = Some(invocation(inv, Some(c.seed)));
    let csv = result.to_csv();
    match &c.out {
        Some(out) => {
            let (csv_path, json_path) = paired_paths(out);
            write_atomic(&csv_path, csv.as_bytes())?;
            write_atomic(&json_path, result.to_json()?.as_bytes())?;
        }
        None => print!("{csv}"),
    }
    let failed: Vec<&str> = result
        .records
        .iter()
        .filter(|r| !r.pass)
        .map(|r| r.label.as_str())
        .collect();
    if result.pass {
        eprintln!(
            "suite {}: pass ({} records)",
            result.suite,
            result.records.len()
        );
    } else {
        eprintln!(
            "suite {}: FAIL ({} of {} records failed: {})",
            result.suite,
            failed.len(),
            result.records.len(),
            failed.join(", ")
        );
    }
    Ok(result.pass)
}

fn run_sweep_cmd(a: SweepArgs, inv: &[String]) -> Result<()> {
    announce_seed(a.seed);
    let preset: Preset = a.grid.parse()?;
    let axis: Axis = match &a.axis {
        Some(s) => s.parse()?,
        None => preset.axis(),
    };
    let dataset = if a.dataset == "synth" {
        DatasetSource::Synth(SynthSpec {
            seed: a.seed,
            ..SynthSpec::default()
        })
    } else {
        DatasetSource::Csv(PathBuf::from(&a.dataset))
    };
    let spec = SweepSpec {
        repeats: a.repeats,
        split: SplitSpec {
            train_fraction: a.train_fraction,
            seed: a.seed,
            stratified: true,
        },
        train: TrainSpec {
            lambda: a.lambda,
            epochs: a.epochs,
            seed: a.seed,
        },
        seed: a.seed,
        record_timing: a.timing,
        ..SweepSpec::new(dataset, preset.grid())
    };
    let mut report = run_sweep(&spec)?;
    report.invocation = Some(invocation(inv, Some(a.seed)));
    let table = fig_tables(&report, axis)?;
    match &a.out {
        Some(out) => {
            let (csv_path, json_path) = paired_paths(out);
            write_atomic(&json_path, report.to_json()?.as_bytes())?;
            write_atomic(&csv_path, table.as_bytes())?;
        }
        None => print!("{table}"),
    }
    eprintln!(
        "baseline accuracy {:.4} (std {:.4})",
        report.baseline.acc_mean, report.baseline.acc_std
    );
    Ok(())
}

/// Run the CLI on `args` (including the program name) and return the exit
/// code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp
                | ErrorKind::DisplayVersion
                | ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => {
                    let _ = e.print();
                    if e.kind() == ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand {
                        EXIT_ERROR
                    } else {
                        EXIT_OK
                    }
                }
                _ => {
                    let msg = e.to_string();
                    let first = msg.lines().next().unwrap_or("invalid arguments");
                    eprintln!("{first}");
                    EXIT_ERROR
                }
            };
        }
    };
    let mut inv: Vec<String> = args
        .iter()
        .map(|a| a.to_string_lossy().into_owned())
        .collect();
    if let Some(first) = inv.first_mut() {
        *first = "sparsecap".to_string();
    }
    let outcome = match cli.command {
        Command::Synth(a) => run_synth(a, &inv).map(|_| true),
        Command::Transform(a) => run_transform(a, &inv).map(|_| true),
        Command::Bounds(b) => run_bounds(b).map(|_| true),
        Command::Verify(v) => run_verify(v, &inv),
        Command::Sweep(a) => run_sweep_cmd(a, &inv).map(|_| true),
    };
    exit_code(outcome)
}

fn exit_code(outcome: Result<bool>) -> i32 {
    match outcome {
        Ok(true) => EXIT_OK,
        Ok(false) => EXIT_SUITE_FAILED,
        Err(e) => {
            eprintln!("error: {}", e.to_string().replace('\n', " "));
            EXIT_ERROR
        }
    }
}
