//! Cluster-size distributions on `{1, 2, ...}`.

use rand::Rng;

use crate::error::{Error, Result};
use crate::math::{ln_factorial, ln_gamma, log_sum_exp};

/// Negative binomial truncated to the positive integers:
/// `mu_s = gamma * Gamma(s + r) p^s / (Gamma(r) s!)` with
/// `gamma = (1 - p)^r / (1 - (1 - p)^r)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncNegBin {
    r: f64,
    p: f64,
    log_gamma: f64,
    ln_gamma_r: f64,
}

impl TruncNegBin {
    pub fn new(r: f64, p: f64) -> Result<Self> {
        if !(r > 0.0) || !r.is_finite() {
            return Err(Error::InvalidParameter(format!("r must be positive, got {r}")));
        }
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::InvalidParameter(format!("p must lie in (0, 1), got {p}")));
        }
        // ln((1-p)^r) and ln(1 - (1-p)^r) without cancellation
        let a = r * (-p).ln_1p();
        let log_gamma = a - (-a.exp_m1()).ln();
        Ok(Self {
            r,
            p,
            log_gamma,
            ln_gamma_r: ln_gamma(r),
        })
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    /// The normalizer `gamma`.
    pub fn gamma(&self) -> f64 {
        self.log_gamma.exp()
    }

    pub fn log_gamma(&self) -> f64 {
        self.log_gamma
    }

    pub fn log_pmf(&self, s: usize) -> f64 {
        if s == 0 {
            return f64::NEG_INFINITY;
        }
        let s_f = s as f64;
        self.log_gamma + ln_gamma(s_f + self.r) - self.ln_gamma_r - ln_factorial(s)
            + s_f * self.p.ln()
    }

    pub fn pmf(&self, s: usize) -> f64 {
        self.log_pmf(s).exp()
    }

    /// `sum_s s mu_s = [r p / (1 - p)] / (1 - (1 - p)^r)`.
    pub fn mean(&self) -> f64 {
        let a = self.r * (-self.p).ln_1p();
        self.r * self.p / (1.0 - self.p) / (-a.exp_m1())
    }

    /// `sum_{s > m} mu_s`, summed directly from the tail when it is small.
    pub fn tail_mass(&self, m: usize) -> f64 {
        let head: f64 = (1..=m).map(|s| self.pmf(s)).sum();
        let complement = 1.0 - head;
        if complement > 1e-3 {
            return complement;
        }
        let mut s = m + 1;
        let mut term = self.pmf(s);
        let mut total = 0.0;
        // successive ratio p (s + r) / (s + 1) tends to p < 1
        while term > 0.0 && term > total * 1e-17 {
            total += term;
            term *= self.p * (s as f64 + self.r) / (s as f64 + 1.0);
            s += 1;
            if s > m + 10_000_000 {
                break;
            }
        }
        total
    }

    /// Inverse-CDF draw using the pmf recursion.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let mut s = 1usize;
        let mut term = self.pmf(1);
        let mut acc = term;
        while acc <= u {
            term *= self.p * (s as f64 + self.r) / (s as f64 + 1.0);
            s += 1;
            acc += term;
            if term < 1e-300 && acc > 1.0 - 1e-12 {
                break;
            }
        }
        s
    }
}

/// Explicit probabilities for sizes `1..=m` plus unassigned tail mass on
/// sizes above `m`. Stored in log space so Dirichlet draws with tiny
/// concentrations do not underflow.
#[derive(Debug, Clone, PartialEq)]
pub struct ExplicitSizes {
    log_probs: Vec<f64>,
    log_tail: f64,
}

impl ExplicitSizes {
    pub fn from_probs(probs: &[f64], tail: f64) -> Result<Self> {
        if probs.iter().any(|&x| !(x >= 0.0)) || !(tail >= 0.0) {
            return Err(Error::InvalidParameter(
                "size probabilities must be nonnegative".into(),
            ));
        }
        let total: f64 = probs.iter().sum::<f64>() + tail;
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParameter(format!(
                "size probabilities sum to {total}, expected 1"
            )));
        }
        Ok(Self {
            log_probs: probs.iter().map(|x| x.ln()).collect(),
            log_tail: tail.ln(),
        })
    }

    /// Trusts the caller that the masses are normalized.
    pub fn from_log_probs(log_probs: Vec<f64>, log_tail: f64) -> Self {
        Self {
            log_probs,
            log_tail,
        }
    }

    pub fn truncation(&self) -> usize {
        self.log_probs.len()
    }

    pub fn log_probs(&self) -> &[f64] {
        &self.log_probs
    }

    pub fn log_tail(&self) -> f64 {
        self.log_tail
    }

    pub fn tail(&self) -> f64 {
        self.log_tail.exp()
    }

    pub(crate) fn push_component(&mut self, log_mass: f64, log_tail: f64) {
        self.log_probs.push(log_mass);
        self.log_tail = log_tail;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SizeDistribution {
    NegBin(TruncNegBin),
    Explicit(ExplicitSizes),
}

impl SizeDistribution {
    pub fn geometric(p: f64) -> Result<Self> {
        TruncNegBin::new(1.0, p).map(Self::NegBin)
    }

    pub fn explicit(probs: &[f64], tail: f64) -> Result<Self> {
        ExplicitSizes::from_probs(probs, tail).map(Self::Explicit)
    }

    /// Log-mass at size `s`. Sizes above an explicit truncation have no
    /// individually assigned mass and report `-inf`.
    pub fn log_pmf(&self, s: usize) -> f64 {
        match self {
            Self::NegBin(nb) => nb.log_pmf(s),
            Self::Explicit(e) => {
                if s == 0 || s > e.log_probs.len() {
                    f64::NEG_INFINITY
                } else {
                    e.log_probs[s - 1]
                }
            }
        }
    }

    pub fn pmf(&self, s: usize) -> f64 {
        self.log_pmf(s).exp()
    }

    /// Mass not attached to any individual size (zero for parametric).
    pub fn unassigned_tail(&self) -> f64 {
        match self {
            Self::NegBin(_) => 0.0,
            Self::Explicit(e) => e.tail(),
        }
    }

    /// Mean size, when it is determined (explicit distributions with tail
    /// mass have an unknown mean).
    pub fn mean(&self) -> Option<f64> {
        match self {
            Self::NegBin(nb) => Some(nb.mean()),
            Self::Explicit(e) => {
                if e.tail() > 0.0 {
                    None
                } else {
                    Some(
                        e.log_probs
                            .iter()
                            .enumerate()
                            .map(|(i, lp)| (i + 1) as f64 * lp.exp())
                            .sum(),
                    )
                }
            }
        }
    }

    /// Draws a size. For explicit distributions a draw from the tail is
    /// reported as `m + 1`, i.e. "some size above the truncation".
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        match self {
            Self::NegBin(nb) => nb.sample(rng),
            Self::Explicit(e) => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for (i, lp) in e.log_probs.iter().enumerate() {
                    acc += lp.exp();
                    if u < acc {
                        return i + 1;
                    }
                }
                e.log_probs.len() + 1
            }
        }
    }

    /// Total mass, for validating explicit draws.
    pub fn total_mass(&self) -> f64 {
        match self {
            Self::NegBin(_) => 1.0,
            Self::Explicit(e) => {
                let mut logs = e.log_probs.clone();
                logs.push(e.log_tail);
                log_sum_exp(&logs).exp()
            }
        }
    }
}
