//! Closed-form probability and norm bounds for the difference-of-Bernoulli
//! matrix and the cap operator.

use serde::Serialize;
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::matrix::validate_p;

/// Moments of a single matrix entry `X - Y`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EntryMoments {
    pub mean: f64,
    pub zero_prob: f64,
    pub variance: f64,
}

pub fn entry_moments(p: f64) -> Result<EntryMoments> {
    validate_p(p)?;
    Ok(EntryMoments {
        mean: 0.0,
        zero_prob: 2.0 * p * p - 2.0 * p + 1.0,
        variance: 2.0 * p * (1.0 - p),
    })
}

/// Inputs shared by the distance-preservation bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundSpec {
    pub epsilon: f64,
    pub n: usize,
    pub m: Option<usize>,
    pub p: f64,
}

impl BoundSpec {
    pub fn new(epsilon: f64, n: usize, p: f64) -> Result<Self> {
        let spec = Self {
            epsilon,
            n,
            m: None,
            p,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        validate_p(self.p)?;
        if !(self.epsilon > 0.0) {
            return Err(Error::invalid(format!(
                "epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        if self.n == 0 {
            return Err(Error::invalid("n must be positive"));
        }
        Ok(())
    }

    /// Entry variance `2p(1-p)`.
    pub fn sigma2(&self) -> f64 {
        2.0 * self.p * (1.0 - self.p)
    }

    /// `L^2 = 1 / sigma^2`, the sub-Gaussian moment constant for the entries.
    pub fn l2(&self) -> f64 {
        1.0 / self.sigma2()
    }

    /// Fourth moment of an entry; equal to the second since `m_ij^4 = m_ij^2`.
    pub fn fourth_moment(&self) -> f64 {
        self.sigma2()
    }
}

/// Lower bound on the probability that `||Mu - Mv||^2 / (n sigma^2)` stays
/// within `(1 +- eps) ||u - v||^2`:
///
/// `1 - exp(-(eps^2 - eps^3) n / 4) - exp(-(eps^2 - eps^3) n / (2 (1/sigma^2 + 1)))`,
/// clamped at zero.
pub fn jl_success_bound(spec: &BoundSpec) -> Result<f64> {
    spec.validate()?;
    if spec.epsilon >= 1.0 {
        return Err(Error::invalid(format!(
            "epsilon must be below 1 for a meaningful bound, got {}",
            spec.epsilon
        )));
    }
    let (upper, lower) = jl_tail_terms(spec);
    Ok((1.0 - upper - lower).max(0.0))
}

/// The two tail probabilities subtracted in [`jl_success_bound`]:
/// `(upper deviation, lower deviation)`.
pub fn jl_tail_terms(spec: &BoundSpec) -> (f64, f64) {
    let eps = spec.epsilon;
    let rate = (eps * eps - eps * eps * eps) * spec.n as f64;
    let upper = (-rate / 4.0).exp();
    let lower = (-rate / (2.0 * (spec.l2() + 1.0))).exp();
    (upper, lower)
}

/// Log of the determinant threshold `(2p(1-p))^{m/2} sqrt(m!) exp(-m^{1/2+eps})`.
pub fn det_lower_threshold(m: usize, p: f64, epsilon: f64) -> Result<f64> {
    validate_p(p)?;
    if m == 0 {
        return Err(Error::invalid("m must be positive"));
    }
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(Error::invalid(format!(
            "epsilon must be positive, got {epsilon}"
        )));
    }
    let m_f = m as f64;
    let sigma2 = 2.0 * p * (1.0 - p);
    Ok(0.5 * m_f * sigma2.ln() + 0.5 * ln_gamma(m_f + 1.0) - m_f.powf(0.5 + epsilon))
}

/// Same as [`crate::cap::cap_error_bound`].
pub fn capped_residual_bound(norm_p: f64, k: usize, p_norm: f64) -> Result<f64> {
    crate::cap::cap_error_bound(norm_p, k, p_norm)
}
