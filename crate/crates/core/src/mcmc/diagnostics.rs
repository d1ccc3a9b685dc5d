//! Effective sample size and Monte Carlo standard error for scalar chains,
//! using Geyer's initial monotone sequence estimator.

use crate::error::{Error, Result};

pub const MIN_SAMPLES: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChainSummary {
    pub mean: f64,
    pub mcse: f64,
    pub ess: f64,
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn is_constant(xs: &[f64]) -> bool {
    xs.iter().all(|&x| x == xs[0])
}

fn autocov(xs: &[f64], mu: f64, lag: usize) -> f64 {
    let n = xs.len();
    xs[..n - lag]
        .iter()
        .zip(&xs[lag..])
        .map(|(a, b)| (a - mu) * (b - mu))
        .sum::<f64>()
        / n as f64
}

/// Integrated autocorrelation time; 1 for a constant sequence.
pub fn autocorrelation_time(xs: &[f64]) -> f64 {
    let n = xs.len();
    let mu = mean(xs);
    let c0 = autocov(xs, mu, 0);
    if !(c0 > 0.0) || is_constant(xs) {
        return 1.0;
    }
    let mut tau = -1.0;
    let mut prev = f64::INFINITY;
    let mut k = 0;
    while 2 * k + 1 < n {
        let gamma = (autocov(xs, mu, 2 * k) + autocov(xs, mu, 2 * k + 1)) / c0;
        if gamma <= 0.0 {
            break;
        }
        // enforce a monotone sequence of pair sums
        let g = gamma.min(prev);
        tau += 2.0 * g;
        prev = g;
        k += 1;
    }
    tau.max(1.0 / n as f64)
}

pub fn ess(xs: &[f64]) -> Result<f64> {
    if xs.len() < MIN_SAMPLES {
        return Err(Error::TooFewSamples {
            need: MIN_SAMPLES,
            got: xs.len(),
        });
    }
    Ok(xs.len() as f64 / autocorrelation_time(xs))
}

/// Mean, time-series MCSE and ESS of a scalar chain.
pub fn diagnostics(xs: &[f64]) -> Result<ChainSummary> {
    let ess = ess(xs)?;
    if is_constant(xs) {
        return Ok(ChainSummary {
            mean: xs[0],
            mcse: 0.0,
            ess: xs.len() as f64,
        });
    }
    let mu = mean(xs);
    let var = autocov(xs, mu, 0) * xs.len() as f64 / (xs.len() as f64 - 1.0);
    Ok(ChainSummary {
        mean: mu,
        mcse: (var / ess).sqrt(),
        ess,
    })
}

/// Like `diagnostics`, but falls back to the i.i.d. standard error for
/// short chains.
pub fn summarize(xs: &[f64]) -> Result<ChainSummary> {
    if xs.is_empty() {
        return Err(Error::EmptyDraws);
    }
    if xs.len() >= MIN_SAMPLES {
        return diagnostics(xs);
    }
    let n = xs.len() as f64;
    let mu = if is_constant(xs) { xs[0] } else { mean(xs) };
    let se = if xs.len() > 1 {
        (xs.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt()
    } else {
        0.0
    };
    Ok(ChainSummary {
        mean: mu,
        mcse: se,
        ess: n,
    })
}
