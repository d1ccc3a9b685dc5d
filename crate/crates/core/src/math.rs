//! Small numeric helpers shared by the samplers.

use rand::Rng;
use rand_distr::{Distribution, Gamma};
pub use statrs::function::gamma::ln_gamma;

/// `ln(n!)`.
pub fn ln_factorial(n: usize) -> f64 {
    ln_gamma(n as f64 + 1.0)
}

/// `ln(exp(a) + exp(b))` without overflow.
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// `ln(1 + exp(x))`.
pub fn softplus(x: f64) -> f64 {
    if x > 35.0 {
        x + (-x).exp()
    } else {
        x.exp().ln_1p()
    }
}

/// Draws an index with probability proportional to `exp(log_weights[i])`.
///
/// Returns `None` when every weight is zero.
pub fn sample_log_weights<R: Rng + ?Sized>(log_weights: &[f64], rng: &mut R) -> Option<usize> {
    let max = log_weights
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return None;
    }
    let mut total = 0.0;
    let mut cumulative = Vec::with_capacity(log_weights.len());
    for &w in log_weights {
        total += (w - max).exp();
        cumulative.push(total);
    }
    let u = rng.random::<f64>() * total;
    let idx = cumulative.partition_point(|&c| c <= u);
    Some(idx.min(log_weights.len() - 1))
}

/// Draws an index with probability proportional to nonnegative `weights`.
pub fn sample_weights<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> Option<usize> {
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return None;
    }
    let u = rng.random::<f64>() * total;
    let mut acc = 0.0;
    for (i, &w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return Some(i);
        }
    }
    // rounding: fall back to the last positive entry
    weights.iter().rposition(|&w| w > 0.0)
}

/// Log of a Gamma(shape, 1) draw, accurate for very small shapes where the
/// draw itself underflows.
pub fn sample_log_gamma<R: Rng + ?Sized>(shape: f64, rng: &mut R) -> f64 {
    debug_assert!(shape > 0.0);
    if shape >= 1.0 {
        let g = Gamma::new(shape, 1.0).expect("valid gamma shape");
        return g.sample(rng).ln();
    }
    // G(a) = G(a + 1) * U^(1/a)
    let g = Gamma::new(shape + 1.0, 1.0).expect("valid gamma shape");
    let u: f64 = rng.random::<f64>();
    let u = if u <= 0.0 { f64::MIN_POSITIVE } else { u };
    g.sample(rng).ln() + u.ln() / shape
}

/// Log-probabilities of a Dirichlet draw with the given concentrations.
pub fn sample_log_dirichlet<R: Rng + ?Sized>(alphas: &[f64], rng: &mut R) -> Vec<f64> {
    let logs: Vec<f64> = alphas
        .iter()
        .map(|&a| sample_log_gamma(a.max(1e-300), rng))
        .collect();
    let norm = log_sum_exp(&logs);
    logs.into_iter().map(|l| l - norm).collect()
}

/// Uniformly shuffles a slice (Fisher-Yates, deterministic given the RNG).
pub fn shuffle<T, R: Rng + ?Sized>(xs: &mut [T], rng: &mut R) {
    for i in (1..xs.len()).rev() {
        let j = rng.random_range(0..=i);
        xs.swap(i, j);
    }
}
