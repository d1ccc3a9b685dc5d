//! Ground-truth partitions for the simulation scenarios and noisy records
//! generated from them.

use std::collections::BTreeMap;

use rand::Rng;

use crate::error::{Error, Result};
use crate::likelihood::{sample_records, RecordTable};
use crate::partition::Partition;

/// A size multiset (size -> number of clusters) plus record-generation
/// settings.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpec {
    pub sizes: BTreeMap<usize, usize>,
    pub l: usize,
    pub d: usize,
    pub beta: f64,
}

impl ScenarioSpec {
    pub fn new(sizes: BTreeMap<usize, usize>, l: usize, d: usize, beta: f64) -> Self {
        Self { sizes, l, d, beta }
    }

    /// Named presets with `L = 5` fields of `D = 10` categories. Scenario 1
    /// has 50 clusters each of sizes 1 to 4. Scenarios 2 to 5 are
    /// approximate shapes with 200 clusters each: many size-5 clusters,
    /// a decaying profile, a two-point mix of singletons and size 5, and
    /// mid-sized clusters only.
    pub fn preset(id: u32, beta: f64) -> Result<Self> {
        let sizes: &[(usize, usize)] = match id {
            1 => &[(1, 50), (2, 50), (3, 50), (4, 50)],
            2 => &[(1, 20), (2, 20), (3, 20), (4, 20), (5, 120)],
            3 => &[(1, 100), (2, 50), (3, 25), (4, 13), (5, 7), (6, 3), (7, 2)],
            4 => &[(1, 100), (5, 100)],
            5 => &[(4, 50), (5, 50), (6, 50), (7, 50)],
            other => return Err(Error::Config(format!("no scenario preset {other}; choose 1 to 5"))),
        };
        Ok(Self::new(sizes.iter().copied().collect(), 5, 10, beta))
    }

    pub fn n(&self) -> usize {
        self.sizes.iter().map(|(s, c)| s * c).sum()
    }

    pub fn k(&self) -> usize {
        self.sizes.values().sum()
    }
}

/// Contiguous blocks of records, smallest clusters first.
pub fn scenario_partition(spec: &ScenarioSpec) -> Result<Partition> {
    if spec.sizes.is_empty() || spec.n() == 0 {
        return Err(Error::EmptyScenario);
    }
    if spec.sizes.iter().any(|(&s, &c)| s == 0 || c == 0) {
        return Err(Error::InvalidParameter("scenario sizes and counts must be positive".into()));
    }
    let blocks: Vec<usize> = spec
        .sizes
        .iter()
        .flat_map(|(&s, &c)| std::iter::repeat_n(s, c))
        .collect();
    Partition::from_sizes(&blocks)
}

/// Records drawn from the spike-and-slab model around `truth`; `theta`
/// defaults to uniform over `D` categories per field. Returns the table and
/// the 0-based truth labels of each row.
pub fn generate_dataset<R: Rng + ?Sized>(
    truth: &Partition,
    spec: &ScenarioSpec,
    theta: Option<Vec<Vec<f64>>>,
    rng: &mut R,
) -> Result<(RecordTable, Vec<usize>)> {
    let theta = theta.unwrap_or_else(|| vec![vec![1.0 / spec.d as f64; spec.d]; spec.l]);
    let table = sample_records(truth, &theta, &vec![spec.beta; spec.l], rng)?;
    Ok((table, truth.allocations().to_vec()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::partition::occupancy_profile;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn scenario_one() {
        let spec = ScenarioSpec::preset(1, 0.01).unwrap();
        let p = scenario_partition(&spec).unwrap();
        assert_eq!((p.n(), p.k()), (500, 200));
        assert_eq!(occupancy_profile(&p), spec.sizes);
    }

    #[test]
    fn presets_round_trip() {
        for id in 1..=5 {
            let spec = ScenarioSpec::preset(id, 0.01).unwrap();
            assert_eq!(spec.k(), 200);
            let p = scenario_partition(&spec).unwrap();
            assert_eq!(occupancy_profile(&p), spec.sizes);
        }
        assert!(ScenarioSpec::preset(6, 0.01).is_err());
    }

    #[test]
    fn other_shapes() {
        let spec = ScenarioSpec::new([(1, 7)].into_iter().collect(), 1, 2, 0.1);
        assert_eq!(scenario_partition(&spec).unwrap().k(), 7);
        let spec = ScenarioSpec::new([(5, 638), (1, 91), (2, 90), (3, 90), (4, 91)].into_iter().collect(), 6, 10, 0.01);
        assert_eq!(spec.n(), 5 * 638 + 91 + 2 * 90 + 3 * 90 + 4 * 91);
        assert_eq!(scenario_partition(&spec).unwrap().n(), spec.n());
        let empty = ScenarioSpec::new(BTreeMap::new(), 1, 2, 0.1);
        assert!(matches!(scenario_partition(&empty), Err(Error::EmptyScenario)));
    }

    #[test]
    fn noiseless_clusters_are_identical_and_seeded() {
        let spec = ScenarioSpec::new([(3, 10), (1, 5)].into_iter().collect(), 4, 6, 0.0);
        let truth = scenario_partition(&spec).unwrap();
        let (t, labels) = generate_dataset(&truth, &spec, None, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!((t.n(), t.l()), (35, 4));
        for i in 0..t.n() {
            for j in 0..t.n() {
                if labels[i] == labels[j] {
                    assert_eq!(t.row(i), t.row(j));
                }
            }
        }
        let (again, _) = generate_dataset(&truth, &spec, None, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(t, again);
    }

    #[test]
    fn full_distortion_gives_uniform_marginals() {
        let spec = ScenarioSpec::new([(100_000, 1)].into_iter().collect(), 1, 10, 1.0);
        let truth = scenario_partition(&spec).unwrap();
        let (t, _) = generate_dataset(&truth, &spec, None, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        let mut counts = [0usize; 10];
        for i in 0..t.n() {
            counts[t.code(i, 0) as usize] += 1;
        }
        let e = 10_000.0;
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - e).powi(2) / e).sum();
        // 9 degrees of freedom, 0.999 quantile 27.88
        assert!(chi2 < 27.88, "{chi2}");
    }
}
