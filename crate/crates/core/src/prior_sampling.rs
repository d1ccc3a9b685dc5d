//! Exact and weighted samplers for ESC prior partitions.

use rand::Rng;
use rand_distr::{Beta, Distribution, Gamma};

use crate::error::{Error, Result};
use crate::esc::EscHyper;
use crate::math::{log_add_exp, sample_log_gamma, sample_weights, shuffle};
use crate::partition::Partition;
use crate::size_dist::{SizeDistribution, TruncNegBin};

pub const DEFAULT_MAX_ATTEMPTS: u64 = 1_000_000;

/// Prior over the size distribution `mu`. Each sampler call draws a fresh
/// `mu` from it, so the resulting partitions follow the marginal model.
#[derive(Debug, Clone)]
pub enum MuPrior {
    Fixed(SizeDistribution),
    /// `mu = TruncNegBin(r, p)`, `r ~ Gamma(eta_r, s_r)`, `p ~ Beta(u_p, v_p)`.
    EscNb(EscHyper),
    /// `mu ~ Dir(alpha * TruncNegBin(r, p))` with `(r, p)` drawn as for ESC-NB.
    EscD(EscHyper),
    /// ESC-D with the base parameters held fixed.
    EscDFixed { r: f64, p: f64, alpha: f64 },
}

impl MuPrior {
    fn validate(&self) -> Result<()> {
        match self {
            Self::Fixed(mu) => {
                if mu.unassigned_tail() > 0.0 {
                    return Err(Error::InvalidParameter(
                        "fixed size distribution must not carry unassigned tail mass".into(),
                    ));
                }
                if !(mu.pmf(1) > 0.0) {
                    return Err(Error::InvalidParameter("samplers require mu_1 > 0".into()));
                }
                Ok(())
            }
            Self::EscNb(h) | Self::EscD(h) => h.validate(),
            Self::EscDFixed { r, p, alpha } => {
                TruncNegBin::new(*r, *p)?;
                if *alpha > 0.0 {
                    Ok(())
                } else {
                    Err(Error::InvalidParameter(format!("alpha must be positive, got {alpha}")))
                }
            }
        }
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> DrawnMu {
        match self {
            Self::Fixed(mu) => DrawnMu::Fixed(mu.clone()),
            Self::EscNb(h) => DrawnMu::Fixed(SizeDistribution::NegBin(draw_base(h, rng))),
            Self::EscD(h) => DrawnMu::Lazy(LazyDirichlet::new(draw_base(h, rng), h.alpha)),
            Self::EscDFixed { r, p, alpha } => DrawnMu::Lazy(LazyDirichlet::new(
                TruncNegBin::new(*r, *p).expect("validated"),
                *alpha,
            )),
        }
    }
}

fn draw_base<R: Rng + ?Sized>(h: &EscHyper, rng: &mut R) -> TruncNegBin {
    let gamma = Gamma::new(h.eta_r, h.s_r).expect("validated hyperparameters");
    let beta = Beta::new(h.u_p, h.v_p).expect("validated hyperparameters");
    loop {
        let r = gamma.sample(rng);
        let p = beta.sample(rng);
        // r can underflow to 0 and p can round to an endpoint for extreme shapes
        if let Ok(nb) = TruncNegBin::new(r, p) {
            return nb;
        }
    }
}

/// Infinite Dirichlet draw around a base distribution, realized lazily by
/// stick breaking: component `s` takes a Beta(alpha mu0_s, alpha mu0_{>s})
/// fraction of the mass left on sizes `>= s`.
struct LazyDirichlet {
    base: TruncNegBin,
    alpha: f64,
    log_mu: Vec<f64>,
    // log_rest[s] = log mass on sizes > s
    log_rest: Vec<f64>,
    // log of the conditional fraction P(S = s | S >= s)
    log_frac: Vec<f64>,
}

impl LazyDirichlet {
    fn new(base: TruncNegBin, alpha: f64) -> Self {
        Self {
            base,
            alpha,
            log_mu: Vec::new(),
            log_rest: vec![0.0],
            log_frac: Vec::new(),
        }
    }

    fn extend_to<R: Rng + ?Sized>(&mut self, s: usize, rng: &mut R) {
        while self.log_mu.len() < s {
            let next = self.log_mu.len() + 1;
            let a = (self.alpha * self.base.pmf(next)).max(1e-300);
            let b = (self.alpha * self.base.tail_mass(next)).max(1e-300);
            let g1 = sample_log_gamma(a, rng);
            let g2 = sample_log_gamma(b, rng);
            let norm = log_add_exp(g1, g2);
            let prev = *self.log_rest.last().expect("nonempty");
            self.log_frac.push(g1 - norm);
            self.log_mu.push(prev + g1 - norm);
            self.log_rest.push(prev + g2 - norm);
        }
    }
}

enum DrawnMu {
    Fixed(SizeDistribution),
    Lazy(LazyDirichlet),
}

impl DrawnMu {
    fn sample_size<R: Rng + ?Sized>(&mut self, rng: &mut R) -> usize {
        match self {
            Self::Fixed(mu) => mu.sample(rng),
            Self::Lazy(d) => {
                let mut s = 1;
                loop {
                    d.extend_to(s, rng);
                    let u: f64 = rng.random();
                    if u.ln() < d.log_frac[s - 1] {
                        return s;
                    }
                    s += 1;
                }
            }
        }
    }

    fn pmf<R: Rng + ?Sized>(&mut self, s: usize, rng: &mut R) -> f64 {
        match self {
            Self::Fixed(mu) => mu.pmf(s),
            Self::Lazy(d) => {
                d.extend_to(s, rng);
                d.log_mu[s - 1].exp()
            }
        }
    }
}

/// Lays out blocks of the given sizes in a uniformly random arrangement of
/// the records.
pub fn partition_from_size_sequence<R: Rng + ?Sized>(sizes: &[usize], rng: &mut R) -> Result<Partition> {
    let mut labels: Vec<usize> = sizes
        .iter()
        .enumerate()
        .flat_map(|(j, &s)| std::iter::repeat_n(j, s))
        .collect();
    shuffle(&mut labels, rng);
    Partition::from_allocations(&labels)
}

/// Cluster sizes of one exact ESC draw, in generation order.
pub fn rejection_sample_sizes<R: Rng + ?Sized>(
    prior: &MuPrior,
    n: usize,
    max_attempts: u64,
    rng: &mut R,
) -> Result<Vec<usize>> {
    if n == 0 {
        return Err(Error::InvalidParameter("n must be at least 1".into()));
    }
    prior.validate()?;
    let mut sizes = Vec::new();
    for _ in 0..max_attempts {
        let mut mu = prior.draw(rng);
        sizes.clear();
        let mut total = 0;
        while total < n {
            let s = mu.sample_size(rng);
            total += s;
            sizes.push(s);
        }
        if total == n {
            return Ok(sizes);
        }
    }
    Err(Error::RejectionTimeout {
        attempts: max_attempts,
    })
}

/// Exact draw from the ESC prior on partitions of `n` records.
pub fn rejection_sample<R: Rng + ?Sized>(prior: &MuPrior, n: usize, rng: &mut R) -> Result<Partition> {
    let sizes = rejection_sample_sizes(prior, n, DEFAULT_MAX_ATTEMPTS, rng)?;
    partition_from_size_sequence(&sizes, rng)
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightedPartition {
    pub partition: Partition,
    pub weight: f64,
}

/// One weighted draw: sizes are generated until they reach `n`, then the
/// sequence is cut at a point `k` chosen proportionally to `mu_{D_k}`, with
/// `D_k` the remainder left before the `k`-th size.
pub fn importance_sample<R: Rng + ?Sized>(prior: &MuPrior, n: usize, rng: &mut R) -> Result<WeightedPartition> {
    if n == 0 {
        return Err(Error::InvalidParameter("n must be at least 1".into()));
    }
    prior.validate()?;
    let mut mu = prior.draw(rng);
    let mut sizes = Vec::new();
    let mut remainders = Vec::new();
    let mut total = 0;
    while total < n {
        remainders.push(n - total);
        let s = mu.sample_size(rng);
        total += s;
        sizes.push(s);
    }
    let w: Vec<f64> = remainders.iter().map(|&d| mu.pmf(d, rng)).collect();
    let weight: f64 = w.iter().sum();
    let k = sample_weights(&w, rng).ok_or_else(|| {
        Error::InvalidParameter("importance weight vanished; mu_1 must be positive".into())
    })?;
    sizes.truncate(k);
    sizes.push(remainders[k]);
    Ok(WeightedPartition {
        partition: partition_from_size_sequence(&sizes, rng)?,
        weight,
    })
}

/// `sum W h / sum W`.
pub fn self_normalized_mean<F>(draws: &[WeightedPartition], h: F) -> Result<f64>
where
    F: Fn(&Partition) -> f64,
{
    self_normalized_estimate(draws, h).map(|(m, _)| m)
}

/// Self-normalized estimate and its delta-method standard error.
pub fn self_normalized_estimate<F>(draws: &[WeightedPartition], h: F) -> Result<(f64, f64)>
where
    F: Fn(&Partition) -> f64,
{
    if draws.is_empty() {
        return Err(Error::EmptyDraws);
    }
    let values: Vec<f64> = draws.iter().map(|d| h(&d.partition)).collect();
    let total: f64 = draws.iter().map(|d| d.weight).sum();
    if !(total > 0.0) {
        return Err(Error::InvalidParameter("weights must be positive".into()));
    }
    let mean = draws
        .iter()
        .zip(&values)
        .map(|(d, v)| d.weight * v)
        .sum::<f64>()
        / total;
    let var = draws
        .iter()
        .zip(&values)
        .map(|(d, v)| (d.weight * (v - mean)).powi(2))
        .sum::<f64>();
    Ok((mean, var.sqrt() / total))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn geo() -> MuPrior {
        MuPrior::Fixed(SizeDistribution::geometric(0.5).unwrap())
    }

    fn wp(weight: f64, n: usize) -> WeightedPartition {
        WeightedPartition {
            partition: Partition::singletons(n).unwrap(),
            weight,
        }
    }

    #[test]
    fn n1_is_trivial() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            assert_eq!(rejection_sample(&geo(), 1, &mut rng).unwrap().k(), 1);
            let w = importance_sample(&geo(), 1, &mut rng).unwrap();
            assert_eq!(w.partition.k(), 1);
            assert!((w.weight - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn rejection_frequencies_small_n() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let draws = 100_000;
        let (mut pair, mut triple) = (0, 0);
        for _ in 0..draws {
            if rejection_sample(&geo(), 2, &mut rng).unwrap().k() == 1 {
                pair += 1;
            }
            if rejection_sample(&geo(), 3, &mut rng).unwrap().k() == 1 {
                triple += 1;
            }
        }
        let check = |count: usize, p: f64| {
            let f = count as f64 / draws as f64;
            let se = (p * (1.0 - p) / draws as f64).sqrt();
            assert!((f - p).abs() < 3.0 * se, "{f} vs {p}");
        };
        check(pair, 0.5);
        check(triple, 0.25);
    }

    #[test]
    fn importance_pair_probability() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let draws: Vec<_> = (0..100_000)
            .map(|_| importance_sample(&geo(), 2, &mut rng).unwrap())
            .collect();
        assert!(draws.iter().all(|d| d.weight > 0.0));
        let (m, se) = self_normalized_estimate(&draws, |p| (p.k() == 1) as u8 as f64).unwrap();
        assert!((m - 0.5).abs() < 3.0 * se, "{m} +- {se}");
    }

    #[test]
    fn self_normalized_examples() {
        let d = [wp(1.0, 2), wp(1.0, 4)];
        assert_eq!(self_normalized_mean(&d, |p| p.n() as f64).unwrap(), 3.0);
        let d = [wp(1.0, 1), wp(3.0, 4)];
        let v = self_normalized_mean(&d, |p| if p.n() == 1 { 0.0 } else { 4.0 }).unwrap();
        assert_eq!(v, 3.0);
        assert!(matches!(self_normalized_mean(&[], |_| 0.0), Err(Error::EmptyDraws)));
    }

    #[test]
    fn expected_clusters_agree_across_samplers() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let reps = 20_000;
        let ks: Vec<f64> = (0..reps)
            .map(|_| rejection_sample(&geo(), 50, &mut rng).unwrap().k() as f64)
            .collect();
        let mean = ks.iter().sum::<f64>() / reps as f64;
        let var = ks.iter().map(|k| (k - mean).powi(2)).sum::<f64>() / (reps - 1) as f64;
        let se_rej = (var / reps as f64).sqrt();
        let draws: Vec<_> = (0..reps)
            .map(|_| importance_sample(&geo(), 50, &mut rng).unwrap())
            .collect();
        let (m, se) = self_normalized_estimate(&draws, |p| p.k() as f64).unwrap();
        let combined = (se_rej.powi(2) + se.powi(2)).sqrt();
        assert!((m - mean).abs() < 3.0 * combined, "{m} vs {mean}");
    }

    #[test]
    fn hyperprior_draws_sum_to_n() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let h = EscHyper::default();
        for prior in [MuPrior::EscNb(h), MuPrior::EscD(h), MuPrior::EscDFixed { r: 1.0, p: 0.5, alpha: 1.0 }] {
            for _ in 0..200 {
                let p = rejection_sample(&prior, 20, &mut rng).unwrap();
                assert_eq!(p.n(), 20);
                let w = importance_sample(&prior, 20, &mut rng).unwrap();
                assert_eq!(w.partition.n(), 20);
                assert!(w.weight > 0.0);
            }
        }
    }

    #[test]
    fn lazy_dirichlet_has_base_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let base = TruncNegBin::new(1.0, 0.5).unwrap();
        let reps = 50_000;
        let mut freq = [0usize; 4];
        for _ in 0..reps {
            let mut mu = DrawnMu::Lazy(LazyDirichlet::new(base, 2.0));
            let s = mu.sample_size(&mut rng);
            if s <= 3 {
                freq[s] += 1;
            }
        }
        // the predictive of a single size is the base distribution
        for s in 1..=3 {
            let f = freq[s] as f64 / reps as f64;
            let p = base.pmf(s);
            assert!((f - p).abs() < 4.0 * (p * (1.0 - p) / reps as f64).sqrt(), "{s}: {f}");
        }
    }

    #[test]
    fn rejects_bad_priors() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let tail = MuPrior::Fixed(SizeDistribution::explicit(&[0.5], 0.5).unwrap());
        assert!(rejection_sample(&tail, 3, &mut rng).is_err());
        let no_singletons = MuPrior::Fixed(SizeDistribution::explicit(&[0.0, 1.0], 0.0).unwrap());
        assert!(importance_sample(&no_singletons, 3, &mut rng).is_err());
        let r = rejection_sample_sizes(&geo(), 1000, 0, &mut rng);
        assert!(matches!(r, Err(Error::RejectionTimeout { attempts: 0 })));
    }
}
