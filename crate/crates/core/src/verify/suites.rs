use std::time::Instant;

use rand::Rng;
use rand_distr::{Exp1, StandardNormal};
use rayon::prelude::*;

use super::linalg::{log_abs_det, operator_norm};
use super::rank::exact_rank;
use super::{binomial_stderr, validate_grid, McConfig, SuiteRecord, SuiteResult};
use crate::bounds::{det_lower_threshold, entry_moments, jl_success_bound, BoundSpec};
use crate::cap::{cap, cap_error_bound, lp_norm};
use crate::error::{Error, Result};
use crate::matrix::SparseSignMatrix;
use crate::rng::{derive_seed, stream_rng};

const TAG_INVERTIBILITY: u64 = 1;
const TAG_JL: u64 = 2;
const TAG_OPNORM: u64 = 3;
const TAG_DET: u64 = 4;
const TAG_CAP: u64 = 5;

/// Relative rounding slack allowed in the deterministic inequality checks.
const ROUNDING_SLACK: f64 = 1e-12;

const OPNORM_TOL: f64 = 1e-6;
const OPNORM_MAX_ITER: usize = 1000;

fn timed<F>(cfg: &McConfig, f: F) -> Result<SuiteResult>
where
    F: FnOnce() -> Result<SuiteResult> + Send,
{
    cfg.validate()?;
    let start = Instant::now();
    let pool = cfg.pool()?;
    let mut result = pool.install(f)?;
    if cfg.record_timing {
        result.wall_seconds = Some(start.elapsed().as_secs_f64());
    }
    Ok(result)
}

fn flat_i64(m: &SparseSignMatrix) -> Vec<i64> {
    let mut out = vec![0i64; m.n_rows() * m.n_cols()];
    for (i, j, v) in m.triplets() {
        out[i * m.n_cols() + j] = i64::from(v);
    }
    out
}

/// Empirical entry distribution of one `n x m` sample against the closed
/// forms, judged at four standard errors.
pub fn entry_distribution(cfg: &McConfig, m: usize, n: usize) -> Result<SuiteResult> {
    timed(cfg, || {
        let matrix = SparseSignMatrix::sample(n, m, cfg.p, cfg.seed)?;
        let stats = matrix.entry_stats();
        let moments = entry_moments(cfg.p)?;
        let count = stats.sample_count;
        let z = moments.zero_prob;
        let s2 = moments.variance;

        let mut zero = SuiteRecord::new("zero_fraction", count);
        zero.estimate = stats.zero_fraction;
        zero.stderr = binomial_stderr(z, count);
        zero.bound = Some(z);

        let mut var = SuiteRecord::new("variance", count);
        var.estimate = stats.variance;
        // the squared entries are Bernoulli(sigma^2)
        var.stderr = binomial_stderr(s2, count);
        var.bound = Some(s2);

        let mut mean = SuiteRecord::new("mean", count);
        mean.estimate = stats.mean;
        mean.stderr = (s2 / count as f64).sqrt();
        mean.bound = Some(0.0);

        let records = [zero, var, mean]
            .into_iter()
            .map(|mut r| {
                r.m = Some(m);
                r.n = Some(n);
                r.pass = (r.estimate - r.bound.unwrap_or(0.0)).abs() <= 4.0 * r.stderr;
                r
            })
            .collect();
        Ok(SuiteResult::new("entries", cfg, records))
    })
}

/// Fraction of invertible `m x m` difference-of-Bernoulli matrices for each
/// `m` in `cfg.grid`, decided by exact rank.
///
/// Each point is compared with `(1 - z^m)^m`, the probability of having no
/// zero row (`z` the zero probability of one entry). That is an upper bound
/// on invertibility and is exact at `m = 1`.
pub fn invertibility_curve(cfg: &McConfig) -> Result<SuiteResult> {
    if cfg.grid.is_empty() {
        return Err(Error::invalid("invertibility grid is empty"));
    }
    timed(cfg, || {
        let z = entry_moments(cfg.p)?.zero_prob;
        let mut records = Vec::with_capacity(cfg.grid.len());
        for &m in &cfg.grid {
            if m == 0 {
                return Err(Error::invalid("grid dimensions must be positive"));
            }
            let singular = (0..cfg.trials)
                .into_par_iter()
                .map(|t| {
                    let seed = derive_seed(cfg.seed, &[TAG_INVERTIBILITY, m as u64, t as u64]);
                    let sample = SparseSignMatrix::sample(m, m, cfg.p, seed)?;
                    Ok(exact_rank(&flat_i64(&sample), m, m).rank < m)
                })
                .collect::<Result<Vec<bool>>>()?
                .into_iter()
                .filter(|&s| s)
                .count();
            let q = (cfg.trials - singular) as f64 / cfg.trials as f64;
            let bound = (1.0 - z.powi(m as i32)).powi(m as i32);
            let mut r = SuiteRecord::new("invertible", cfg.trials);
            r.m = Some(m);
            r.estimate = q;
            r.stderr = binomial_stderr(q, cfg.trials);
            r.bound = Some(bound);
            r.failures = singular;
            // judge with the oracle's own spread so q = 1 or 0 is not over-trusted
            let slack = 5.0 * binomial_stderr(bound, cfg.trials).max(r.stderr);
            r.pass = if m == 1 {
                (q - bound).abs() <= slack
            } else {
                q <= bound + slack
            };
            records.push(r);
        }
        Ok(SuiteResult::new("invertibility", cfg, records))
    })
}

/// `||M u - M v||^2 / (n sigma^2 ||u - v||^2)` with `sigma^2 = 2p(1-p)` taken
/// from the matrix's own `p`.
pub fn distance_ratio(matrix: &SparseSignMatrix, u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::DimensionMismatch {
            expected: u.len(),
            actual: v.len(),
        });
    }
    let diff: Vec<f64> = u.iter().zip(v).map(|(a, b)| a - b).collect();
    let denom = diff.iter().map(|x| x * x).sum::<f64>();
    if denom == 0.0 {
        return Err(Error::invalid("u and v coincide"));
    }
    let projected = matrix.apply(&diff)?;
    let sigma2 = 2.0 * matrix.p() * (1.0 - matrix.p());
    let num = projected.iter().map(|x| x * x).sum::<f64>();
    Ok(num / (matrix.n_rows() as f64 * sigma2 * denom))
}

/// Fraction of trials in which a fresh `n x m` matrix keeps the squared
/// distance of a Gaussian pair within `(1 +- eps)`, against the closed-form
/// success bound.
pub fn jl_preservation(cfg: &McConfig, m: usize, n: usize) -> Result<SuiteResult> {
    let spec = BoundSpec::new(cfg.epsilon, n, cfg.p)?;
    let bound = jl_success_bound(&spec)?;
    if m == 0 {
        return Err(Error::invalid("m must be positive"));
    }
    timed(cfg, || {
        let ratios = (0..cfg.trials)
            .into_par_iter()
            .map(|t| {
                let seed = derive_seed(cfg.seed, &[TAG_JL, n as u64, m as u64, t as u64]);
                let matrix = SparseSignMatrix::sample(n, m, cfg.p, seed)?;
                let mut rng = stream_rng(derive_seed(seed, &[1]), 0);
                loop {
                    let u: Vec<f64> = (0..m).map(|_| rng.sample(StandardNormal)).collect();
                    let v: Vec<f64> = (0..m).map(|_| rng.sample(StandardNormal)).collect();
                    match distance_ratio(&matrix, &u, &v) {
                        Err(Error::InvalidParameter(_)) => continue,
                        other => return other,
                    }
                }
            })
            .collect::<Result<Vec<f64>>>()?;
        let eps = cfg.epsilon;
        let outside = ratios.iter().filter(|&&r| (r - 1.0).abs() > eps).count();
        let q = (cfg.trials - outside) as f64 / cfg.trials as f64;
        let mut r = SuiteRecord::new("preserved", cfg.trials);
        r.m = Some(m);
        r.n = Some(n);
        r.estimate = q;
        r.stderr = binomial_stderr(q, cfg.trials);
        r.bound = Some(bound);
        r.max_value = Some(ratios.iter().fold(0.0f64, |a, &x| a.max((x - 1.0).abs())));
        r.failures = outside;
        r.pass = q >= bound - 3.0 * r.stderr;
        Ok(SuiteResult::new("jl", cfg, vec![r]))
    })
}

/// Envelope for `||M||_op / sqrt(n)`: `2 sigma (1 + sqrt(m/n)) + 0.5`.
pub fn opnorm_envelope(m: usize, n: usize, p: f64) -> f64 {
    let sigma = (2.0 * p * (1.0 - p)).sqrt();
    2.0 * sigma * (1.0 + (m as f64 / n as f64).sqrt()) + 0.5
}

/// `||M||_op / sqrt(n)` for `n x m` samples over `n_grid`.
pub fn opnorm_scaling(cfg: &McConfig, m: usize, n_grid: &[usize]) -> Result<SuiteResult> {
    if n_grid.is_empty() {
        return Err(Error::invalid("n grid is empty"));
    }
    validate_grid(n_grid)?;
    timed(cfg, || {
        let mut records = Vec::new();
        for &n in n_grid {
            let estimates = (0..cfg.trials)
                .into_par_iter()
                .map(|t| {
                    let seed = derive_seed(cfg.seed, &[TAG_OPNORM, n as u64, m as u64, t as u64]);
                    let matrix = SparseSignMatrix::sample(n, m, cfg.p, seed)?;
                    Ok(operator_norm(
                        &matrix,
                        OPNORM_TOL,
                        OPNORM_MAX_ITER,
                        derive_seed(seed, &[1]),
                    ))
                })
                .collect::<Result<Vec<_>>>()?;
            let ratios: Vec<f64> = estimates
                .iter()
                .map(|e| e.norm / (n as f64).sqrt())
                .collect();
            let envelope = opnorm_envelope(m, n, cfg.p);
            let trials = ratios.len() as f64;
            let mean = ratios.iter().sum::<f64>() / trials;
            let var = if ratios.len() > 1 {
                ratios.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (trials - 1.0)
            } else {
                0.0
            };
            let above = ratios.iter().filter(|&&r| r > envelope).count();

            let mut r = SuiteRecord::new("opnorm_ratio", cfg.trials);
            r.m = Some(m);
            r.n = Some(n);
            r.estimate = mean;
            r.stderr = (var / trials).sqrt();
            r.bound = Some(envelope);
            r.max_value = Some(ratios.iter().fold(0.0f64, |a, &x| a.max(x)));
            r.failures = above;
            r.pass = above == 0;
            records.push(r);

            let unconverged = estimates.iter().filter(|e| !e.converged).count();
            let mut u = SuiteRecord::new("opnorm_unconverged", cfg.trials);
            u.m = Some(m);
            u.n = Some(n);
            u.estimate = unconverged as f64 / trials;
            u.failures = unconverged;
            u.max_value = estimates
                .iter()
                .map(|e| e.iterations as f64)
                .reduce(f64::max);
            records.push(u);
        }
        Ok(SuiteResult::new("opnorm", cfg, records))
    })
}

/// Fraction of `m x m` samples whose `log |det|` reaches the threshold from
/// [`det_lower_threshold`]. Exactly singular samples count as below it.
pub fn det_bound_incidence(cfg: &McConfig, m: usize, epsilon: f64) -> Result<SuiteResult> {
    if m < 2 {
        return Err(Error::invalid("m must be at least 2"));
    }
    let threshold = det_lower_threshold(m, cfg.p, epsilon)?;
    timed(cfg, || {
        let outcomes = (0..cfg.trials)
            .into_par_iter()
            .map(|t| {
                let seed = derive_seed(cfg.seed, &[TAG_DET, m as u64, t as u64]);
                let sample = SparseSignMatrix::sample(m, m, cfg.p, seed)?;
                let flat = flat_i64(&sample);
                if exact_rank(&flat, m, m).rank < m {
                    return Ok(None);
                }
                let dense: Vec<f64> = flat.iter().map(|&v| v as f64).collect();
                Ok(log_abs_det(&dense, m))
            })
            .collect::<Result<Vec<Option<f64>>>>()?;
        let above = outcomes
            .iter()
            .filter(|o| matches!(o, Some(d) if *d >= threshold))
            .count();
        let q = above as f64 / cfg.trials as f64;
        let mut r = SuiteRecord::new("det_above_threshold", cfg.trials);
        r.m = Some(m);
        r.estimate = q;
        r.stderr = binomial_stderr(q, cfg.trials);
        r.bound = Some(threshold);
        r.max_value = outcomes.iter().flatten().copied().reduce(f64::max);
        r.failures = cfg.trials - above;
        let mut result = SuiteResult::new("det", cfg, vec![r]);
        result.config.epsilon = epsilon;
        Ok(result)
    })
}

#[derive(Default)]
struct CapCounts {
    residual: [(usize, f64); 3],
    sandwich: [usize; 4],
    disagreements: usize,
}

const RESIDUAL_NORMS: [f64; 3] = [0.5, 1.0, 1.5];
const SANDWICH_NORMS: [f64; 4] = [0.5, 1.0, 2.0, f64::INFINITY];

fn cap_probe(seed: u64, length: usize, sparse: bool) -> Vec<f64> {
    let mut rng = stream_rng(seed, 0);
    (0..length)
        .map(|_| {
            if sparse {
                if rng.random::<f64>() < 0.1 {
                    let mag: f64 = rng.sample(Exp1);
                    if rng.random::<bool>() {
                        mag
                    } else {
                        -mag
                    }
                } else {
                    0.0
                }
            } else {
                rng.sample(StandardNormal)
            }
        })
        .collect()
}

fn check_cap_vector(x: &[f64]) -> Result<CapCounts> {
    let len = x.len();
    let mut mags: Vec<f64> = x.iter().map(|v| v.abs()).collect();
    mags.sort_unstable_by(|a, b| b.total_cmp(a));

    // tail[k] = ||x - c_k(x)||_2^2, summed smallest first
    let mut tail = vec![0.0; len + 1];
    for k in (0..len).rev() {
        tail[k] = tail[k + 1] + mags[k] * mags[k];
    }

    let mut counts = CapCounts::default();
    for (slot, &p) in RESIDUAL_NORMS.iter().enumerate() {
        let norm = lp_norm(x, p);
        for (k, t) in tail.iter().enumerate() {
            let bound = cap_error_bound(norm, k, p)?;
            let resid = t.sqrt();
            if resid > bound * (1.0 + ROUNDING_SLACK) {
                counts.residual[slot].0 += 1;
            }
            if bound > 0.0 {
                counts.residual[slot].1 = counts.residual[slot].1.max(resid / bound);
            }
        }
    }

    let inf = mags.first().copied().unwrap_or(0.0);
    for (slot, &q) in SANDWICH_NORMS.iter().enumerate() {
        let mut head = 0.0;
        let heads: Vec<f64> = mags
            .iter()
            .map(|&m| {
                if q == f64::INFINITY {
                    head = inf;
                } else {
                    head += m.powf(q);
                }
                head
            })
            .collect();
        let to_norm = |s: f64| {
            if q == f64::INFINITY {
                s
            } else {
                s.powf(1.0 / q)
            }
        };
        let full = to_norm(heads.last().copied().unwrap_or(0.0));
        for &h in &heads {
            let capped = to_norm(h);
            if inf > capped * (1.0 + ROUNDING_SLACK) || capped > full * (1.0 + ROUNDING_SLACK) {
                counts.sandwich[slot] += 1;
            }
        }
    }

    // spot-check the operator itself against the sorted-tail residuals
    let mut ks: Vec<usize> = (0..=len).step_by(97).collect();
    ks.extend([1, len / 2, len]);
    for k in ks {
        let c = cap(x, k)?.vector;
        let resid: Vec<f64> = x.iter().zip(&c).map(|(a, b)| a - b).collect();
        let direct = lp_norm(&resid, 2.0);
        let expected = tail[k.min(len)].sqrt();
        if (direct - expected).abs() > 1e-9 * expected.max(1.0) {
            counts.disagreements += 1;
        }
    }
    Ok(counts)
}

/// Checks, on `cfg.trials` random vectors of the given length, that
/// `||x - c_k(x)||_2 <= ||x||_p (k+1)^{1/2 - 1/p}` for every `k` in
/// `0..=length` and `p` in {0.5, 1, 1.5}, and that
/// `||x||_inf <= ||c_k(x)||_q <= ||x||_q` for `k >= 1` and `q` in
/// {0.5, 1, 2, inf}. Even trials use Gaussian vectors, odd trials sparse
/// Laplace vectors. Comparisons allow a relative rounding slack of `1e-12`.
pub fn cap_bound_sweep(cfg: &McConfig, length: usize) -> Result<SuiteResult> {
    if length == 0 {
        return Err(Error::invalid("length must be at least 1"));
    }
    timed(cfg, || {
        let per_trial = (0..cfg.trials)
            .into_par_iter()
            .map(|t| {
                let seed = derive_seed(cfg.seed, &[TAG_CAP, length as u64, t as u64]);
                check_cap_vector(&cap_probe(seed, length, t % 2 == 1))
            })
            .collect::<Result<Vec<CapCounts>>>()?;

        let checks_per_norm = cfg.trials * (length + 1);
        let mut records = Vec::new();
        for (slot, &p) in RESIDUAL_NORMS.iter().enumerate() {
            let violations: usize = per_trial.iter().map(|c| c.residual[slot].0).sum();
            let worst = per_trial
                .iter()
                .map(|c| c.residual[slot].1)
                .fold(0.0, f64::max);
            let mut r = SuiteRecord::new("residual", cfg.trials);
            r.n = Some(length);
            r.norm = Some(p);
            r.estimate = violations as f64 / checks_per_norm as f64;
            r.max_value = Some(worst);
            r.failures = violations;
            r.pass = violations == 0;
            records.push(r);
        }
        for (slot, &q) in SANDWICH_NORMS.iter().enumerate() {
            let violations: usize = per_trial.iter().map(|c| c.sandwich[slot]).sum();
            let label = if q.is_infinite() {
                "sandwich_inf"
            } else {
                "sandwich"
            };
            let mut r = SuiteRecord::new(label, cfg.trials);
            r.n = Some(length);
            r.norm = q.is_finite().then_some(q);
            r.estimate = violations as f64 / (cfg.trials * length) as f64;
            r.failures = violations;
            r.pass = violations == 0;
            records.push(r);
        }
        let disagreements: usize = per_trial.iter().map(|c| c.disagreements).sum();
        let mut r = SuiteRecord::new("cap_agreement", cfg.trials);
        r.n = Some(length);
        r.failures = disagreements;
        r.pass = disagreements == 0;
        records.push(r);
        Ok(SuiteResult::new("cap", cfg, records))
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(trials: usize, p: f64, grid: Vec<usize>) -> McConfig {
        McConfig {
            trials,
            seed: 42,
            p,
            grid,
            epsilon: 0.5,
            workers: 2,
            record_timing: false,
        }
    }

    #[test]
    fn invertibility_at_m1_is_nonzero_probability() {
        let c = cfg(20_000, 0.05, vec![1, 2, 3]);
        let res = invertibility_curve(&c).unwrap();
        let r = res.record("invertible", Some(1), None).unwrap();
        assert!((r.bound.unwrap() - 0.095).abs() < 1e-15);
        let se = binomial_stderr(0.095, 20_000);
        assert!((r.estimate - 0.095).abs() <= 5.0 * se, "{}", r.estimate);
        assert!(res.pass);
    }

    #[test]
    fn invertibility_m2_matches_enumeration() {
        // P(det != 0) for 2x2 over the trinomial, by enumerating 3^4 patterns
        let p = 0.3;
        let q = p * (1.0 - p);
        let w = |v: i64| if v == 0 { 1.0 - 2.0 * q } else { q };
        let mut exact = 0.0;
        for a in -1..=1i64 {
            for b in -1..=1 {
                for c in -1..=1 {
                    for d in -1..=1 {
                        if a * d - b * c != 0 {
                            exact += w(a) * w(b) * w(c) * w(d);
                        }
                    }
                }
            }
        }
        let res = invertibility_curve(&cfg(20_000, p, vec![2])).unwrap();
        let r = &res.records[0];
        assert!((r.estimate - exact).abs() <= 5.0 * binomial_stderr(exact, 20_000));
    }

    #[test]
    fn invertibility_is_worker_independent() {
        let mut a = cfg(300, 0.1, vec![4, 9, 16]);
        let b_res = {
            let mut b = a.clone();
            b.workers = 1;
            invertibility_curve(&b).unwrap()
        };
        a.workers = 3;
        let a_res = invertibility_curve(&a).unwrap();
        assert_eq!(a_res.records, b_res.records);
    }

    #[test]
    fn distance_ratio_is_scale_free() {
        let m = SparseSignMatrix::sample(400, 20, 0.1, 3).unwrap();
        let u: Vec<f64> = (0..20).map(|i| (i as f64).sin()).collect();
        let v: Vec<f64> = (0..20).map(|i| (i as f64 * 0.7).cos()).collect();
        let r = distance_ratio(&m, &u, &v).unwrap();
        for alpha in [1e-3, 0.5, 7.0, 1e4] {
            let su: Vec<f64> = u.iter().map(|x| x * alpha).collect();
            let sv: Vec<f64> = v.iter().map(|x| x * alpha).collect();
            let rs = distance_ratio(&m, &su, &sv).unwrap();
            assert!((r - rs).abs() < 1e-12 * r);
            assert_eq!((r - 1.0).abs() <= 0.5, (rs - 1.0).abs() <= 0.5);
        }
        assert!(distance_ratio(&m, &u, &u).is_err());
    }

    #[test]
    fn jl_suite_clamped_bound_is_reported() {
        let mut c = cfg(50, 0.05, vec![]);
        c.epsilon = 0.99;
        let res = jl_preservation(&c, 10, 20).unwrap();
        let r = &res.records[0];
        assert_eq!(r.bound, Some(0.0));
        assert!(r.pass);
        assert!((0.0..=1.0).contains(&r.estimate));
        c.epsilon = 1.0;
        assert!(jl_preservation(&c, 10, 20).is_err());
    }

    #[test]
    fn opnorm_small_run_within_envelope() {
        let res = opnorm_scaling(&cfg(5, 0.05, vec![]), 20, &[100, 200]).unwrap();
        assert!(res.pass);
        assert_eq!(res.records.len(), 4);
        assert!(opnorm_scaling(&cfg(5, 0.05, vec![]), 20, &[200, 100]).is_err());
    }

    #[test]
    fn det_incidence_m2_matches_enumeration() {
        // threshold at m=2, p=0.5, eps=0.1 is about -1.86, so |det| in {1, 2}
        // always clears it; the oracle weighs all 3^4 sign patterns
        let (p, eps) = (0.5, 0.1);
        let threshold = det_lower_threshold(2, p, eps).unwrap();
        let q = p * (1.0 - p);
        let w = |v: i64| if v == 0 { 1.0 - 2.0 * q } else { q };
        let mut exact = 0.0;
        for a in -1..=1i64 {
            for b in -1..=1 {
                for c in -1..=1 {
                    for d in -1..=1 {
                        let det = a * d - b * c;
                        if det != 0 && (det.abs() as f64).ln() >= threshold {
                            exact += w(a) * w(b) * w(c) * w(d);
                        }
                    }
                }
            }
        }
        let mut c = cfg(20_000, p, vec![]);
        c.epsilon = eps;
        let res = det_bound_incidence(&c, 2, eps).unwrap();
        let r = &res.records[0];
        assert!((r.estimate - exact).abs() <= 5.0 * binomial_stderr(exact, 20_000));
        assert!(det_bound_incidence(&c, 1, eps).is_err());
    }

    #[test]
    fn cap_checks_on_trivial_vectors() {
        let zero = check_cap_vector(&[0.0; 16]).unwrap();
        assert!(zero.residual.iter().all(|r| r.0 == 0));
        assert!(zero.sandwich.iter().all(|&s| s == 0));
        let mut one_sparse = vec![0.0; 16];
        one_sparse[5] = -3.25;
        let c = check_cap_vector(&one_sparse).unwrap();
        assert!(c.residual.iter().all(|r| r.0 == 0));
        assert!(c.sandwich.iter().all(|&s| s == 0));
        assert_eq!(c.disagreements, 0);
    }

    #[test]
    fn cap_sweep_small() {
        let res = cap_bound_sweep(&cfg(40, 0.05, vec![]), 64).unwrap();
        assert!(res.pass, "{:?}", res.records);
        assert_eq!(res.records.len(), 8);
    }

    #[test]
    fn entry_distribution_small() {
        let res = entry_distribution(&cfg(1, 0.3, vec![]), 100, 300).unwrap();
        assert_eq!(res.records.len(), 3);
        assert!(res.records.iter().all(|r| r.trials == 30_000));
    }
}
