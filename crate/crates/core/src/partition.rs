//! Canonical set partitions of `{0, .., n-1}`.
//!
//! A [`Partition`] stores one cluster label per record. Labels are always
//! canonical: cluster `j` is the `j`-th distinct label met when scanning the
//! records in order, so two partitions are equal exactly when they group the
//! records the same way.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::math::ln_factorial;
use crate::size_dist::SizeDistribution;

/// Largest `n` accepted by [`enumerate_partitions`] (B(12) = 4,213,597).
pub const MAX_ENUMERATION_N: usize = 12;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Partition {
    labels: Vec<usize>,
    sizes: Vec<usize>,
    occupancy: BTreeMap<usize, usize>,
}

/// Destination of [`Partition::move_record`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Target {
    Existing(usize),
    New,
}

impl Partition {
    /// Builds the canonical partition induced by arbitrary labels.
    pub fn from_allocations(z: &[usize]) -> Result<Self> {
        if z.is_empty() {
            return Err(Error::EmptyAllocations);
        }
        let mut relabel: BTreeMap<usize, usize> = BTreeMap::new();
        let mut labels = Vec::with_capacity(z.len());
        let mut sizes = Vec::new();
        for &raw in z {
            let next = relabel.len();
            let c = *relabel.entry(raw).or_insert(next);
            if c == sizes.len() {
                sizes.push(0);
            }
            sizes[c] += 1;
            labels.push(c);
        }
        let occupancy = occupancy_of(&sizes);
        Ok(Self {
            labels,
            sizes,
            occupancy,
        })
    }

    /// Contiguous blocks with the given sizes, in order.
    pub fn from_sizes(sizes: &[usize]) -> Result<Self> {
        if sizes.is_empty() || sizes.contains(&0) {
            return Err(Error::InvalidParameter(
                "cluster sizes must be nonempty and positive".into(),
            ));
        }
        let labels: Vec<usize> = sizes
            .iter()
            .enumerate()
            .flat_map(|(c, &s)| std::iter::repeat_n(c, s))
            .collect();
        Self::from_allocations(&labels)
    }

    /// The partition with every record in its own cluster.
    pub fn singletons(n: usize) -> Result<Self> {
        Self::from_allocations(&(0..n).collect::<Vec<_>>())
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn k(&self) -> usize {
        self.sizes.len()
    }

    /// Canonical zero-based labels.
    pub fn allocations(&self) -> &[usize] {
        &self.labels
    }

    /// Canonical labels starting at 1, as written to trace files.
    pub fn allocations_one_based(&self) -> Vec<usize> {
        self.labels.iter().map(|&c| c + 1).collect()
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn max_size(&self) -> usize {
        self.sizes.iter().copied().max().unwrap_or(0)
    }

    /// Number of clusters of each occupied size.
    pub fn occupancy(&self) -> &BTreeMap<usize, usize> {
        &self.occupancy
    }

    pub fn cluster_of(&self, i: usize) -> usize {
        self.labels[i]
    }

    /// Member lists, indexed by canonical label.
    pub fn clusters(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.k()];
        for (i, &c) in self.labels.iter().enumerate() {
            out[c].push(i);
        }
        out
    }

    /// Reassigns record `i`, keeping sizes and occupancy in step and
    /// restoring canonical labels.
    pub fn move_record(&self, i: usize, target: Target) -> Result<Self> {
        let mut out = self.clone();
        out.move_record_in_place(i, target)?;
        Ok(out)
    }

    pub fn move_record_in_place(&mut self, i: usize, target: Target) -> Result<()> {
        let n = self.n();
        if i >= n {
            return Err(Error::RecordOutOfRange { index: i, n });
        }
        let to = match target {
            Target::Existing(c) if c < self.k() => c,
            Target::Existing(c) => {
                return Err(Error::InvalidTarget {
                    label: c,
                    k: self.k(),
                })
            }
            Target::New => self.k(),
        };
        let from = self.labels[i];
        if from == to {
            return Ok(());
        }
        if to == self.k() {
            self.sizes.push(0);
        }
        self.bump_occupancy(self.sizes[from], -1);
        self.sizes[from] -= 1;
        if self.sizes[from] > 0 {
            self.bump_occupancy(self.sizes[from], 1);
        }
        if self.sizes[to] > 0 {
            self.bump_occupancy(self.sizes[to], -1);
        }
        self.sizes[to] += 1;
        self.bump_occupancy(self.sizes[to], 1);
        self.labels[i] = to;
        self.recanonicalize();
        Ok(())
    }

    fn bump_occupancy(&mut self, size: usize, delta: isize) {
        let entry = self.occupancy.entry(size).or_insert(0);
        *entry = (*entry as isize + delta) as usize;
        if *entry == 0 {
            self.occupancy.remove(&size);
        }
    }

    // Relabels by first appearance and drops emptied clusters. Sizes travel
    // with their labels, so occupancy is unaffected.
    fn recanonicalize(&mut self) {
        let mut map = vec![usize::MAX; self.sizes.len()];
        let mut next = 0;
        for label in self.labels.iter_mut() {
            if map[*label] == usize::MAX {
                map[*label] = next;
                next += 1;
            }
            *label = map[*label];
        }
        let mut sizes = vec![0; next];
        for (old, &new) in map.iter().enumerate() {
            if new != usize::MAX {
                sizes[new] = self.sizes[old];
            }
        }
        self.sizes = sizes;
    }

    /// Number of unordered record pairs sharing a cluster.
    pub fn linked_pairs(&self) -> u64 {
        self.sizes
            .iter()
            .map(|&s| (s as u64) * (s as u64).saturating_sub(1) / 2)
            .sum()
    }
}

fn occupancy_of(sizes: &[usize]) -> BTreeMap<usize, usize> {
    let mut occ = BTreeMap::new();
    for &s in sizes {
        *occ.entry(s).or_insert(0) += 1;
    }
    occ
}

/// `M_{s,n}` for every occupied size `s`.
pub fn occupancy_profile(p: &Partition) -> BTreeMap<usize, usize> {
    p.occupancy.clone()
}

/// Log of the conditional EPPF given `mu`:
/// `ln K! - ln n! + sum_j [ln S_j! + ln mu_{S_j}] - ln P(E_n | mu)`.
///
/// Returns `-inf` when `mu` puts no mass on an observed size.
pub fn log_eppf_conditional(p: &Partition, mu: &SizeDistribution, log_p_en: f64) -> f64 {
    let mut acc = ln_factorial(p.k()) - ln_factorial(p.n()) - log_p_en;
    for (&size, &count) in p.occupancy() {
        let lm = mu.log_pmf(size);
        if lm == f64::NEG_INFINITY {
            return f64::NEG_INFINITY;
        }
        acc += count as f64 * (ln_factorial(size) + lm);
    }
    acc
}

/// Every set partition of `{0, .., n-1}` exactly once, as restricted growth
/// strings in lexicographic order.
pub fn enumerate_partitions(n: usize) -> Result<PartitionIter> {
    if n == 0 || n > MAX_ENUMERATION_N {
        return Err(Error::EnumerationGuard {
            n,
            max: MAX_ENUMERATION_N,
        });
    }
    Ok(PartitionIter {
        labels: vec![0; n],
        prefix_max: vec![0; n],
        done: false,
    })
}

pub struct PartitionIter {
    labels: Vec<usize>,
    // prefix_max[i] = max(labels[..=i])
    prefix_max: Vec<usize>,
    done: bool,
}

impl Iterator for PartitionIter {
    type Item = Partition;

    fn next(&mut self) -> Option<Partition> {
        if self.done {
            return None;
        }
        let out = Partition::from_allocations(&self.labels).expect("n >= 1");
        let n = self.labels.len();
        // advance: rightmost position that can be incremented
        let mut i = n - 1;
        loop {
            if i == 0 {
                self.done = true;
                break;
            }
            if self.labels[i] <= self.prefix_max[i - 1] {
                self.labels[i] += 1;
                self.prefix_max[i] = self.prefix_max[i - 1].max(self.labels[i]);
                for j in i + 1..n {
                    self.labels[j] = 0;
                    self.prefix_max[j] = self.prefix_max[i];
                }
                break;
            }
            i -= 1;
        }
        Some(out)
    }
}
