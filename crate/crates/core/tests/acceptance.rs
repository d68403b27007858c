//! Acceptance suite. Runs every criterion at full size and prints one
//! PASS/FAIL line per criterion; exits nonzero if any criterion fails.
//!
//! Reference values are computed here, independently of the library, from
//! the closed forms; seeded regression values are frozen constants.

use std::path::Path;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use sparsecap::classifier::TrainSpec;
use sparsecap::dataset::{SplitSpec, SynthSpec};
use sparsecap::experiments::{run_sweep, DatasetSource, GridPoint, SweepSpec, Variant};
use sparsecap::verify::{self, McConfig, SuiteResult};

const SEED: u64 = 42;

/// First seeded run of the determinant incidence suite (m=64, p=0.3,
/// eps=0.1, 500 trials, seed 42).
const FROZEN_DET_INCIDENCE: f64 = 1.0;
/// First seeded run of the operator norm suite: mean ||M||op / sqrt(n) at
/// m=100, n=2000, p=0.05, 50 trials, seed 42.
const FROZEN_OPNORM_RATIO_N2000: f64 = 0.3773233654817446;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn cfg(trials: usize, p: f64, grid: Vec<usize>, epsilon: f64) -> McConfig {
    McConfig {
        trials,
        seed: SEED,
        p,
        grid,
        epsilon,
        ..McConfig::default()
    }
}

fn zero_prob(p: f64) -> f64 {
    (1.0 - p) * (1.0 - p) + p * p
}

fn entry_variance(p: f64) -> f64 {
    2.0 * p * (1.0 - p)
}

fn se(q: f64, trials: usize) -> f64 {
    (q * (1.0 - q) / trials as f64).sqrt()
}

fn record_estimate(r: &SuiteResult, label: &str, m: Option<usize>, n: Option<usize>) -> f64 {
    r.record(label, m, n)
        .unwrap_or_else(|| panic!("missing record {label} m={m:?} n={n:?}"))
        .estimate
}

fn within(elapsed: Duration, limit: Duration) -> (bool, String) {
    (
        elapsed < limit,
        format!(
            "{:.2}s (limit {:.0}s)",
            elapsed.as_secs_f64(),
            limit.as_secs_f64()
        ),
    )
}

fn entry_distribution() -> Outcome {
    let p = 0.05;
    let start = Instant::now();
    let r = verify::entry_distribution(&cfg(1, p, vec![], 0.5), 433, 2000).expect("suite runs");
    let (fast, time) = within(start.elapsed(), Duration::from_secs(1));
    let count = 2000 * 433;
    let z = zero_prob(p);
    let s2 = entry_variance(p);
    let zero = record_estimate(&r, "zero_fraction", None, None);
    let var = record_estimate(&r, "variance", None, None);
    let zero_se = se(z, count);
    // entries are in {-1,0,1}, so Var(X^2) = s2 (1 - s2) bounds the spread of the sample variance
    let var_se = (s2 * (1.0 - s2) / count as f64).sqrt();
    let zero_ok = (zero - z).abs() <= 4.0 * zero_se;
    let var_ok = (var - s2).abs() <= 4.0 * var_se;
    outcome(
        zero_ok && var_ok && fast,
        format!(
            "zero fraction {zero:.6} vs {z} ({:+.2} SE), variance {var:.6} vs {s2} ({:+.2} SE), {time}",
            (zero - z) / zero_se,
            (var - s2) / var_se
        ),
    )
}

fn invertibility() -> Outcome {
    let trials = 10_000;
    let start = Instant::now();
    let low =
        verify::invertibility_curve(&cfg(trials, 0.05, vec![1, 100], 0.5)).expect("suite runs");
    let high =
        verify::invertibility_curve(&cfg(trials, 0.1, vec![1, 48], 0.5)).expect("suite runs");
    let elapsed = start.elapsed().as_secs_f64();

    let q100 = record_estimate(&low, "invertible", Some(100), None);
    let q48 = record_estimate(&high, "invertible", Some(48), None);
    let mut ok = q100 >= 0.99 && (0.97..=1.0).contains(&q48);
    let mut detail =
        format!("p=0.05 m=100: {q100:.4} (need >= 0.99); p=0.1 m=48: {q48:.4} (need [0.97, 1])");
    for (res, p) in [(&low, 0.05), (&high, 0.1)] {
        let q1 = record_estimate(res, "invertible", Some(1), None);
        let exact = entry_variance(p);
        let z = (q1 - exact) / se(exact, trials);
        ok &= z.abs() <= 5.0;
        detail.push_str(&format!("; p={p} m=1: {q1:.4} vs {exact:.4} ({z:+.2} SE)"));
    }
    detail.push_str(&format!("; {elapsed:.1}s"));
    outcome(ok, detail)
}

fn jl_bound(epsilon: f64, n: usize, p: f64) -> f64 {
    let s2 = entry_variance(p);
    let e = epsilon * epsilon - epsilon.powi(3);
    let n = n as f64;
    (1.0 - (-e * n / 4.0).exp() - (-e * n / (2.0 * (1.0 / s2 + 1.0))).exp()).max(0.0)
}

fn jl_concentration() -> Outcome {
    let (m, n, p, eps, trials) = (50, 2000, 0.05, 0.5, 1000);
    let start = Instant::now();
    let r = verify::jl_preservation(&cfg(trials, p, vec![], eps), m, n).expect("suite runs");
    let (fast, time) = within(start.elapsed(), Duration::from_secs(60));
    let rec = r.record("preserved", Some(m), Some(n)).expect("record");
    let bound = jl_bound(eps, n, p);
    let q = rec.estimate;
    let preserved = trials - rec.failures;
    let ok = q >= bound - 3.0 * se(q, trials) && preserved >= 997 && fast;
    outcome(
        ok,
        format!("{preserved}/{trials} preserved, fraction {q} vs bound {bound:.10} - 3 SE, {time}"),
    )
}

/// Direct check of the residual bound and the norm sandwich from sorted
/// magnitudes, independent of the library's cap.
fn cap_violations_direct(x: &[f64]) -> (usize, usize) {
    let n = x.len();
    let mut mags: Vec<f64> = x.iter().map(|v| v.abs()).collect();
    mags.sort_by(|a, b| b.total_cmp(a));
    let norm = |q: f64, v: &[f64]| -> f64 {
        if q.is_infinite() {
            v.iter().fold(0.0, |a, &b| a.max(b))
        } else {
            v.iter().map(|a| a.powf(q)).sum::<f64>().powf(1.0 / q)
        }
    };
    // tail[k] = sum of squares of all but the k largest magnitudes
    let mut tail = vec![0.0; n + 1];
    for k in (0..n).rev() {
        tail[k] = tail[k + 1] + mags[k] * mags[k];
    }
    let slack = |v: f64| v * (1.0 + 1e-12) + 1e-300;
    let mut residual = 0;
    for p in [0.5, 1.0, 1.5] {
        let xp = norm(p, &mags);
        for (k, t) in tail.iter().enumerate() {
            if t.sqrt() > slack(xp * ((k + 1) as f64).powf(0.5 - 1.0 / p)) {
                residual += 1;
            }
        }
    }
    let mut sandwich = 0;
    let inf = mags.first().copied().unwrap_or(0.0);
    for q in [0.5, 1.0, 2.0, f64::INFINITY] {
        let full = norm(q, &mags);
        // prefix norms of the k largest magnitudes, accumulated incrementally
        let mut acc = 0.0f64;
        for k in 1..=n {
            let capped = if q.is_infinite() {
                inf
            } else {
                acc += mags[k - 1].powf(q);
                acc.powf(1.0 / q)
            };
            if inf > slack(capped) || capped > slack(full) {
                sandwich += 1;
            }
        }
    }
    (residual, sandwich)
}

fn cap_theorem() -> Outcome {
    let (trials, length) = (1000, 2000);
    let start = Instant::now();
    let r = verify::cap_bound_sweep(&cfg(trials, 0.05, vec![], 0.5), length).expect("suite runs");
    let lib_residual: usize = r
        .records
        .iter()
        .filter(|x| x.label == "residual")
        .map(|x| x.failures)
        .sum();
    let lib_sandwich: usize = r
        .records
        .iter()
        .filter(|x| x.label.starts_with("sandwich"))
        .map(|x| x.failures)
        .sum();
    let lib_agree = r
        .record("cap_agreement", None, None)
        .map_or(usize::MAX, |x| x.failures);

    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let (mut residual, mut sandwich) = (0, 0);
    for t in 0..trials {
        let x: Vec<f64> = (0..length)
            .map(|_| {
                if t % 2 == 0 {
                    rng.sample(StandardNormal)
                } else if rng.random::<f64>() < 0.1 {
                    // Laplace magnitude with random sign
                    let u: f64 = rng.random_range(-0.5..0.5);
                    -u.signum() * (1.0 - 2.0 * u.abs()).ln()
                } else {
                    0.0
                }
            })
            .collect();
        let (a, b) = cap_violations_direct(&x);
        residual += a;
        sandwich += b;
    }
    let (fast, time) = within(start.elapsed(), Duration::from_secs(60));
    let ok = lib_residual == 0
        && lib_sandwich == 0
        && lib_agree == 0
        && residual == 0
        && sandwich == 0
        && fast;
    outcome(
        ok,
        format!(
            "suite: {lib_residual} residual / {lib_sandwich} sandwich violations, {lib_agree} cap disagreements; direct check: {residual} / {sandwich}; {time}"
        ),
    )
}

fn opnorm() -> Outcome {
    let (m, p, trials) = (100, 0.05, 50);
    let grid = [500, 1000, 2000];
    let start = Instant::now();
    let r = verify::opnorm_scaling(&cfg(trials, p, vec![], 0.5), m, &grid).expect("suite runs");
    let (fast, time) = within(start.elapsed(), Duration::from_secs(60));
    let sigma = entry_variance(p).sqrt();
    let mut ok = fast;
    let mut parts = Vec::new();
    for n in grid {
        let rec = r.record("opnorm_ratio", Some(m), Some(n)).expect("record");
        let envelope = 2.0 * sigma * (1.0 + (m as f64 / n as f64).sqrt()) + 0.5;
        let max = rec.max_value.expect("max ratio");
        ok &= max < envelope && rec.failures == 0;
        parts.push(format!("n={n}: max {max:.4} < {envelope:.4}"));
    }
    let mean2000 = record_estimate(&r, "opnorm_ratio", Some(m), Some(2000));
    let frozen_ok =
        (mean2000 - FROZEN_OPNORM_RATIO_N2000).abs() <= 1e-12 * FROZEN_OPNORM_RATIO_N2000;
    ok &= frozen_ok;
    outcome(
        ok,
        format!("{}; seeded mean ratio at n=2000 {mean2000} (frozen {FROZEN_OPNORM_RATIO_N2000}); {time}", parts.join(", ")),
    )
}

fn pipeline() -> (Outcome, Outcome) {
    let spec = SweepSpec {
        repeats: 5,
        split: SplitSpec::default(),
        train: TrainSpec::default(),
        seed: SEED,
        ..SweepSpec::new(
            DatasetSource::Synth(SynthSpec::default()),
            vec![
                GridPoint::new(
                    Variant::Capped {
                        p: 0.05,
                        n: 2000,
                        k: 200,
                    },
                    0.0,
                ),
                GridPoint::new(
                    Variant::Capped {
                        p: 0.05,
                        n: 2000,
                        k: 0,
                    },
                    0.0,
                ),
            ],
        )
    };
    let start = Instant::now();
    let report = run_sweep(&spec).expect("sweep runs");
    let (fast, time) = within(start.elapsed(), Duration::from_secs(300));
    let base = report.baseline.acc_mean;
    let capped = report.records[0].acc_mean;
    let zero = report.records[1].acc_mean;
    let gap = (capped - base).abs();
    (
        outcome(
            base >= 0.90 && gap <= 0.05 && fast,
            format!(
                "baseline {base:.4} (need >= 0.90), n=2000 p=0.05 k=200: {capped:.4}, gap {:.2} pp (limit 5), sparsity {:.3}, {time}",
                100.0 * gap,
                report.records[0].sparsity
            ),
        ),
        outcome(
            (0.05..=0.15).contains(&zero),
            format!("k=0 accuracy {zero:.4} (need [0.05, 0.15]), sparsity {}", report.records[1].sparsity),
        ),
    )
}

fn run_cli(args: &[&str]) -> i32 {
    sparsecap::cli::run(std::iter::once("sparsecap").chain(args.iter().copied()))
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().expect("temp dir");
    let d = |name: &str| dir.path().join(name).to_string_lossy().into_owned();
    let data = d("data.csv");
    assert_eq!(
        run_cli(&[
            "synth",
            "--classes",
            "4",
            "--per-class",
            "10",
            "--dim",
            "30",
            "--out",
            &data
        ]),
        0
    );

    let jobs: Vec<(&str, Vec<String>)> = vec![
        (
            "synth",
            vec![
                "synth".into(),
                "--classes".into(),
                "4".into(),
                "--per-class".into(),
                "10".into(),
                "--dim".into(),
                "30".into(),
            ],
        ),
        (
            "transform",
            vec![
                "transform".into(),
                "--input".into(),
                data.clone(),
                "--n".into(),
                "200".into(),
                "--k".into(),
                "20".into(),
            ],
        ),
        ("entries", vec!["verify".into(), "entries".into()]),
        (
            "invertibility",
            vec![
                "verify".into(),
                "invertibility".into(),
                "--m".into(),
                "1:20".into(),
                "--trials".into(),
                "500".into(),
            ],
        ),
        (
            "jl",
            vec![
                "verify".into(),
                "jl".into(),
                "--trials".into(),
                "200".into(),
            ],
        ),
        (
            "opnorm",
            vec![
                "verify".into(),
                "opnorm".into(),
                "--trials".into(),
                "10".into(),
            ],
        ),
        (
            "det",
            vec![
                "verify".into(),
                "det".into(),
                "--m".into(),
                "16".into(),
                "--p".into(),
                "0.3".into(),
                "--epsilon".into(),
                "0.1".into(),
                "--trials".into(),
                "200".into(),
            ],
        ),
        (
            "cap",
            vec![
                "verify".into(),
                "cap".into(),
                "--length".into(),
                "300".into(),
                "--trials".into(),
                "40".into(),
            ],
        ),
        (
            "sweep",
            vec![
                "sweep".into(),
                "--dataset".into(),
                data.clone(),
                "--grid".into(),
                "noise".into(),
                "--repeats".into(),
                "2".into(),
                "--epochs".into(),
                "3".into(),
            ],
        ),
    ];
    let is_verify = |args: &[String]| args[0] == "verify";
    let mut compared = 0;
    let mut mismatches = Vec::new();
    for (name, args) in &jobs {
        let mut outputs = Vec::new();
        for (run, workers) in ["1", "1", "3"].iter().enumerate() {
            if run == 2 && !is_verify(args) {
                continue;
            }
            let stem = d(&format!("{name}_{run}"));
            let ext = if args[0] == "sweep" { "json" } else { "csv" };
            let out = format!("{stem}.{ext}");
            let mut full: Vec<&str> = args.iter().map(String::as_str).collect();
            full.extend(["--seed", "42", "--out", &out]);
            if is_verify(args) {
                full.extend(["--workers", workers]);
            }
            let code = run_cli(&full);
            if code != 0 && code != 2 {
                mismatches.push(format!("{name}: exit {code}"));
                continue;
            }
            let mut files = Vec::new();
            for ext in ["csv", "json"] {
                let path = format!("{stem}.{ext}");
                if Path::new(&path).exists() {
                    let bytes = std::fs::read(&path).expect("read output");
                    // the header records the invocation, which names the output path
                    let text = String::from_utf8(bytes)
                        .expect("utf8")
                        .replace(&stem, "OUT");
                    let text = text.replace(&format!("--workers {workers}"), "--workers W");
                    files.push(text);
                }
            }
            outputs.push(files);
        }
        compared += 1;
        if outputs.windows(2).any(|w| w[0] != w[1]) || outputs.iter().any(Vec::is_empty) {
            mismatches.push(name.to_string());
        }
    }
    outcome(
        mismatches.is_empty(),
        if mismatches.is_empty() {
            format!("{compared} subcommands byte-identical across reruns (verify suites also across 1 vs 3 workers)")
        } else {
            format!("differences in: {}", mismatches.join(", "))
        },
    )
}

fn det_incidence() -> Outcome {
    let (m, p, eps, trials) = (64, 0.3, 0.1, 500);
    let run = |seed: u64| {
        let c = McConfig {
            seed,
            ..cfg(trials, p, vec![], eps)
        };
        record_estimate(
            &verify::det_bound_incidence(&c, m, eps).expect("suite runs"),
            "det_above_threshold",
            Some(m),
            None,
        )
    };
    let first = run(SEED);
    let again = run(SEED);
    let other = run(SEED + 1);
    let ok = first == FROZEN_DET_INCIDENCE
        && again == first
        && (other - FROZEN_DET_INCIDENCE).abs() <= 0.05;
    outcome(
        ok,
        format!("seed 42: {first} (frozen {FROZEN_DET_INCIDENCE}), rerun {again}, seed 43: {other} (need within 0.05)"),
    )
}

fn main() {
    // libtest passes flags such as --nocapture or a filter; none apply here.
    let started = Instant::now();
    let mut results: Vec<(&str, Outcome)> = Vec::new();
    let mut report = |name: &'static str, o: Outcome| {
        println!(
            "acceptance {name}: {} | {}",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
        results.push((name, o));
    };
    report("1 entry distribution", entry_distribution());
    report("2 invertibility curve", invertibility());
    report("3 distance preservation", jl_concentration());
    report("4 cap error bound", cap_theorem());
    report("5 operator norm scaling", opnorm());
    let (six, seven) = pipeline();
    report("6 classification pipeline", six);
    report("7 cap-to-chance at k=0", seven);
    report("8 determinism", determinism());
    report("9 determinant bound incidence", det_incidence());

    let failed: Vec<&str> = results
        .iter()
        .filter(|(_, o)| !o.pass)
        .map(|(n, _)| *n)
        .collect();
    println!(
        "acceptance summary: {} of {} criteria passed in {:.1}s",
        results.len() - failed.len(),
        results.len(),
        started.elapsed().as_secs_f64()
    );
    if !failed.is_empty() {
        println!("acceptance failed: {}", failed.join("; "));
        std::process::exit(1);
    }
}
