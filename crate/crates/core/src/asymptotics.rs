//! Monte Carlo checks of the large-`n` behaviour of ESC partitions, using
//! exact prior draws.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::prior_sampling::{rejection_sample_sizes, MuPrior, DEFAULT_MAX_ATTEMPTS};
use crate::size_dist::SizeDistribution;

#[derive(Debug, Clone, PartialEq)]
pub struct AsymptoticEstimate {
    pub n: usize,
    pub reps: usize,
    /// Mean of `K_n / n`.
    pub k_over_n: f64,
    /// Mean of `M_{s,n} / n` for `s = 1..=smax` (index `s - 1`).
    pub occupancy_over_n: Vec<f64>,
    /// Mean of the largest cluster size over `n`.
    pub max_over_n: f64,
    /// Size of one uniformly chosen cluster per draw: frequencies over
    /// `1..=smax` followed by the share above `smax`.
    pub size_histogram: Vec<f64>,
    /// The same distribution averaged exactly over the clusters of each
    /// draw, i.e. the mean of `M_{s,n} / K_n`. Same layout.
    pub size_histogram_rb: Vec<f64>,
}

/// Runs `reps` exact prior draws of size `n` in parallel. Each repetition
/// gets its own generator seeded from `rng`, so results do not depend on the
/// thread count.
pub fn asymptotic_estimates<R: Rng + ?Sized>(
    mu: &SizeDistribution,
    n: usize,
    reps: usize,
    smax: usize,
    rng: &mut R,
) -> Result<AsymptoticEstimate> {
    if reps == 0 {
        return Err(Error::InvalidParameter("reps must be positive".into()));
    }
    if mu.mean().is_none() {
        return Err(Error::InvalidParameter("size distribution must have a known finite mean".into()));
    }
    let prior = MuPrior::Fixed(mu.clone());
    let seeds: Vec<u64> = (0..reps).map(|_| rng.random()).collect();
    let draws: Vec<(Vec<usize>, usize)> = seeds
        .par_iter()
        .map(|&seed| {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            let sizes = rejection_sample_sizes(&prior, n, DEFAULT_MAX_ATTEMPTS, &mut r)?;
            let pick = r.random_range(0..sizes.len());
            Ok((sizes, pick))
        })
        .collect::<Result<_>>()?;

    let nf = n as f64;
    let repsf = reps as f64;
    let mut est = AsymptoticEstimate {
        n,
        reps,
        k_over_n: 0.0,
        occupancy_over_n: vec![0.0; smax],
        max_over_n: 0.0,
        size_histogram: vec![0.0; smax + 1],
        size_histogram_rb: vec![0.0; smax + 1],
    };
    let bucket = |s: usize| if s <= smax { s - 1 } else { smax };
    for (sizes, pick) in &draws {
        let k = sizes.len() as f64;
        est.k_over_n += k / nf / repsf;
        est.max_over_n += *sizes.iter().max().expect("nonempty") as f64 / nf / repsf;
        for &s in sizes {
            if s <= smax {
                est.occupancy_over_n[s - 1] += 1.0 / nf / repsf;
            }
            est.size_histogram_rb[bucket(s)] += 1.0 / k / repsf;
        }
        est.size_histogram[bucket(sizes[*pick])] += 1.0 / repsf;
    }
    Ok(est)
}

/// Total-variation distance between a histogram laid out as above and `mu`
/// on `1..=smax` plus the tail above.
pub fn tv_to_mu(hist: &[f64], mu: &SizeDistribution) -> f64 {
    let smax = hist.len() - 1;
    let head: f64 = (1..=smax).map(|s| (hist[s - 1] - mu.pmf(s)).abs()).sum();
    let mu_tail = 1.0 - (1..=smax).map(|s| mu.pmf(s)).sum::<f64>();
    0.5 * (head + (hist[smax] - mu_tail).abs())
}
