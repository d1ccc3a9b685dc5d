//! ESC-NB and ESC-D prior machinery: reallocation weights, conditionals for
//! the size-distribution hyperparameters, the Dirichlet update of an
//! explicit size distribution, and the renewal recursion for `P(E_n | mu)`.

use std::collections::BTreeMap;

use rand::Rng;

use crate::error::{Error, Result};
use crate::math::{ln_gamma, log_add_exp, sample_log_dirichlet, sample_log_gamma};
use crate::size_dist::{ExplicitSizes, SizeDistribution, TruncNegBin};

/// Map from cluster size to the number of clusters of that size.
pub type Occupancy = BTreeMap<usize, usize>;

/// Hyperparameters of the ESC priors: `r ~ Gamma(eta_r, scale s_r)`,
/// `p ~ Beta(u_p, v_p)` and the Dirichlet concentration `alpha` (ESC-D).
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EscHyper {
    pub eta_r: f64,
    pub s_r: f64,
    pub u_p: f64,
    pub v_p: f64,
    pub alpha: f64,
}

impl Default for EscHyper {
    fn default() -> Self {
        Self {
            eta_r: 1.0,
            s_r: 1.0,
            u_p: 2.0,
            v_p: 2.0,
            alpha: 1.0,
        }
    }
}

impl EscHyper {
    pub fn validate(&self) -> Result<()> {
        let all = [self.eta_r, self.s_r, self.u_p, self.v_p, self.alpha];
        if all.iter().all(|&x| x > 0.0 && x.is_finite()) {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "ESC hyperparameters must be positive: {self:?}"
            )))
        }
    }

    fn log_prior(&self, r: f64, p: f64) -> f64 {
        (self.eta_r - 1.0) * r.ln() - r / self.s_r
            + (self.u_p - 1.0) * p.ln()
            + (self.v_p - 1.0) * (-p).ln_1p()
    }
}

/// Renewal probabilities `u_0..=u_n` with `u_0 = 1` and
/// `u_k = sum_{s=1}^{k} mu_s u_{k-s}`; `u_k = P(E_k | mu)`.
pub fn renewal_sequence(mu: &SizeDistribution, n: usize) -> Vec<f64> {
    let pmf: Vec<f64> = (0..=n).map(|s| mu.pmf(s)).collect();
    let mut u = vec![0.0; n + 1];
    u[0] = 1.0;
    for k in 1..=n {
        u[k] = (1..=k).map(|s| pmf[s] * u[k - s]).sum();
    }
    u
}

/// `P(E_n | mu)`, the probability that some prefix of i.i.d. sizes sums to `n`.
pub fn p_event_en(mu: &SizeDistribution, n: usize) -> f64 {
    renewal_sequence(mu, n)[n]
}

/// Unnormalized reallocation weights for one record given the sizes of the
/// other clusters: `(s_j + 1) mu_{s_j+1} / mu_{s_j}` for each existing
/// cluster, then `(k + 1) mu_1` for a new one. A zero `mu` at a required
/// size gives that slot weight zero.
pub fn realloc_weights(sizes_minus_i: &[usize], mu: &SizeDistribution) -> Vec<f64> {
    let k = sizes_minus_i.len();
    let mut w: Vec<f64> = sizes_minus_i
        .iter()
        .map(|&s| {
            let num = mu.log_pmf(s + 1);
            let den = mu.log_pmf(s);
            if num == f64::NEG_INFINITY || den == f64::NEG_INFINITY {
                0.0
            } else {
                (s as f64 + 1.0) * (num - den).exp()
            }
        })
        .collect();
    w.push((k as f64 + 1.0) * mu.pmf(1));
    w
}

/// The negative-binomial specialization: `s_j + r` per existing cluster and
/// `(k + 1) gamma r` for a new cluster (the common factor `p` dropped).
pub fn realloc_weights_nb(sizes_minus_i: &[usize], nb: &TruncNegBin) -> Vec<f64> {
    let k = sizes_minus_i.len();
    let mut w: Vec<f64> = sizes_minus_i
        .iter()
        .map(|&s| s as f64 + nb.r())
        .collect();
    w.push((k as f64 + 1.0) * nb.gamma() * nb.r());
    w
}

fn n_and_k(occ: &Occupancy) -> (usize, usize) {
    occ.iter()
        .fold((0, 0), |(n, k), (&s, &c)| (n + s * c, k + c))
}

/// Unnormalized log density of `(r, p)` given the partition under ESC-NB.
/// Returns `-inf` outside `r > 0, 0 < p < 1`.
pub fn log_cond_rp_nb(occ: &Occupancy, r: f64, p: f64, hyper: &EscHyper) -> f64 {
    let Ok(nb) = TruncNegBin::new(r, p) else {
        return f64::NEG_INFINITY;
    };
    let (n, k) = n_and_k(occ);
    let ln_gamma_r = ln_gamma(r);
    let mut acc = hyper.log_prior(r, p) + n as f64 * p.ln() + k as f64 * nb.log_gamma();
    for (&s, &c) in occ {
        acc += c as f64 * (ln_gamma(s as f64 + r) - ln_gamma_r);
    }
    acc
}

/// Unnormalized log density of `(r, p)` under ESC-D with `mu` integrated out.
pub fn log_cond_rp_escd(occ: &Occupancy, r: f64, p: f64, hyper: &EscHyper) -> f64 {
    let Ok(base) = TruncNegBin::new(r, p) else {
        return f64::NEG_INFINITY;
    };
    let mut acc = hyper.log_prior(r, p);
    for (&s, &m) in occ {
        let a = hyper.alpha * base.pmf(s);
        if a <= 0.0 {
            return f64::NEG_INFINITY;
        }
        acc += ln_gamma(m as f64 + a) - ln_gamma(a);
    }
    acc
}

/// Conjugate draw of an explicit size distribution:
/// `(mu_1, .., mu_m, tail) ~ Dir(alpha mu0_s + M_s, .., alpha * tail0)`.
pub fn sample_mu_posterior<R: Rng + ?Sized>(
    occ: &Occupancy,
    alpha: f64,
    base: &TruncNegBin,
    m: usize,
    rng: &mut R,
) -> Result<SizeDistribution> {
    let max_size = occ.keys().next_back().copied().unwrap_or(0);
    if m < max_size {
        return Err(Error::TruncationTooSmall { m, max_size });
    }
    let mut params: Vec<f64> = (1..=m)
        .map(|s| alpha * base.pmf(s) + occ.get(&s).copied().unwrap_or(0) as f64)
        .collect();
    params.push(alpha * base.tail_mass(m));
    let mut logs = sample_log_dirichlet(&params, rng);
    let log_tail = logs.pop().expect("tail component");
    Ok(SizeDistribution::Explicit(ExplicitSizes::from_log_probs(
        logs, log_tail,
    )))
}

/// Default truncation for the explicit size distribution.
pub fn default_truncation(max_size: usize) -> usize {
    (2 * max_size).max(32)
}

/// Imputes components `m+1..=new_len` of an explicit size distribution from
/// its tail mass, by stick breaking on the aggregated Dirichlet. Valid when
/// no cluster had a size above `m` at the time of the last conjugate draw.
pub fn extend_explicit<R: Rng + ?Sized>(
    mu: &mut ExplicitSizes,
    base: &TruncNegBin,
    alpha: f64,
    new_len: usize,
    rng: &mut R,
) {
    while mu.truncation() < new_len {
        let s = mu.truncation() + 1;
        let a = (alpha * base.pmf(s)).max(1e-300);
        let b = (alpha * base.tail_mass(s)).max(1e-300);
        let g1 = sample_log_gamma(a, rng);
        let g2 = sample_log_gamma(b, rng);
        let norm = log_add_exp(g1, g2);
        let log_tail = mu.log_tail();
        mu.push_component(log_tail + g1 - norm, log_tail + g2 - norm);
    }
}
