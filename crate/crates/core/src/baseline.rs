//! Dirichlet-process and Pitman-Yor partition priors used as baselines.

use rand::Rng;

use crate::error::{Error, Result};
use crate::math::{ln_gamma, sample_weights};
use crate::partition::Partition;

/// Concentration `theta` and discount `sigma` (`sigma = 0` is the DP).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrpParams {
    pub theta: f64,
    pub sigma: f64,
}

impl CrpParams {
    pub fn new(theta: f64, sigma: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&sigma) {
            return Err(Error::InvalidParameter(format!(
                "discount must lie in [0, 1), got {sigma}"
            )));
        }
        if !(theta > -sigma) || !theta.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "concentration must exceed -sigma, got {theta}"
            )));
        }
        Ok(Self { theta, sigma })
    }

    pub fn dp(theta: f64) -> Result<Self> {
        Self::new(theta, 0.0)
    }
}

/// Predictive weights: `S_j - sigma` for each existing cluster, then
/// `theta + sigma k` for a new one.
pub fn crp_realloc_weights(sizes_minus_i: &[usize], params: &CrpParams) -> Vec<f64> {
    let k = sizes_minus_i.len();
    let mut w: Vec<f64> = sizes_minus_i
        .iter()
        .map(|&s| s as f64 - params.sigma)
        .collect();
    w.push(params.theta + params.sigma * k as f64);
    w
}

// sum_{i=1}^{k-1} ln(theta + i sigma) - ln[(theta + 1)_{n-1}]
fn log_theta_terms(k: usize, n: usize, theta: f64, sigma: f64) -> f64 {
    let rising = ln_gamma(theta + n as f64) - ln_gamma(theta + 1.0);
    if sigma == 0.0 {
        (k as f64 - 1.0) * theta.ln() - rising
    } else {
        (1..k).map(|i| (theta + i as f64 * sigma).ln()).sum::<f64>() - rising
    }
}

/// Unnormalized log density of the concentration given `k` clusters among
/// `n` records, under a Gamma(`prior_shape`, rate `prior_rate`) prior. With
/// `sigma = 0` the partition term is `k ln theta + ln G(theta) - ln G(theta + n)`.
pub fn log_cond_concentration(
    k: usize,
    n: usize,
    theta: f64,
    sigma: f64,
    prior_shape: f64,
    prior_rate: f64,
) -> f64 {
    if !(theta > 0.0) || !theta.is_finite() {
        return f64::NEG_INFINITY;
    }
    (prior_shape - 1.0) * theta.ln() - prior_rate * theta + log_theta_terms(k, n, theta, sigma)
}

/// Unnormalized log density of the discount given the partition, under a
/// uniform prior on `[0, 1)`.
pub fn log_cond_discount(p: &Partition, theta: f64, sigma: f64) -> f64 {
    if !(0.0..1.0).contains(&sigma) || !(theta > -sigma) {
        return f64::NEG_INFINITY;
    }
    log_py_eppf(p, &CrpParams { theta, sigma })
}

/// Log Pitman-Yor EPPF:
/// `prod_{i<K}(theta + i sigma) / (theta + 1)_{n-1} * prod_j (1 - sigma)_{S_j - 1}`.
pub fn log_py_eppf(p: &Partition, params: &CrpParams) -> f64 {
    let CrpParams { theta, sigma } = *params;
    let cluster_terms: f64 = p
        .sizes()
        .iter()
        .map(|&s| ln_gamma(s as f64 - sigma) - ln_gamma(1.0 - sigma))
        .sum();
    log_theta_terms(p.k(), p.n(), theta, sigma) + cluster_terms
}

/// Exact draw by sequential seating.
pub fn crp_sample<R: Rng + ?Sized>(n: usize, params: &CrpParams, rng: &mut R) -> Result<Partition> {
    if n == 0 {
        return Err(Error::InvalidParameter("n must be at least 1".into()));
    }
    let mut sizes: Vec<usize> = Vec::new();
    let mut z = Vec::with_capacity(n);
    for _ in 0..n {
        // the first customer always opens a table, whatever the sign of theta
        let j = if sizes.is_empty() {
            0
        } else {
            sample_weights(&crp_realloc_weights(&sizes, params), rng).expect("CRP weights are positive")
        };
        if j == sizes.len() {
            sizes.push(0);
        }
        sizes[j] += 1;
        z.push(j);
    }
    Partition::from_allocations(&z)
}
