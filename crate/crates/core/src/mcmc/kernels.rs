//! Partition update kernels: full Gibbs scans and chaperones moves.

use std::collections::{BTreeMap, HashMap};

use rand::Rng;

use crate::baseline::CrpParams;
use crate::esc::extend_explicit;
use crate::likelihood::{LikTables, RecordTable};
use crate::math::{sample_log_weights, shuffle};
use crate::size_dist::{ExplicitSizes, TruncNegBin};

use super::state::ClusterState;

/// How prior reallocation weights are formed.
#[derive(Debug, Clone)]
pub enum SizeRule {
    /// `S_j + r` for existing clusters, `(K + 1) gamma r` for a new one.
    NegBin(TruncNegBin),
    /// Explicit `mu` drawn around `base`, extended lazily past its truncation.
    Dirichlet {
        mu: ExplicitSizes,
        base: TruncNegBin,
        alpha: f64,
    },
    Crp(CrpParams),
}

/// Log prior reallocation weights, tabulated by cluster size.
#[derive(Debug, Clone)]
pub struct PriorWeights {
    rule: SizeRule,
    log_exist: Vec<f64>,
}

impl PriorWeights {
    pub fn new(rule: SizeRule, n: usize) -> Self {
        let mut w = Self {
            rule,
            log_exist: vec![f64::NEG_INFINITY; n + 2],
        };
        w.tabulate();
        w
    }

    pub fn rule(&self) -> &SizeRule {
        &self.rule
    }

    fn tabulate(&mut self) {
        let len = self.log_exist.len();
        match &self.rule {
            SizeRule::NegBin(nb) => {
                for s in 1..len {
                    self.log_exist[s] = (s as f64 + nb.r()).ln();
                }
            }
            SizeRule::Dirichlet { mu, .. } => {
                let lp = mu.log_probs();
                for s in 1..len {
                    self.log_exist[s] = if s < lp.len() {
                        let (num, den) = (lp[s], lp[s - 1]);
                        if num == f64::NEG_INFINITY || den == f64::NEG_INFINITY {
                            f64::NEG_INFINITY
                        } else {
                            ((s + 1) as f64).ln() + num - den
                        }
                    } else {
                        f64::NEG_INFINITY
                    };
                }
            }
            SizeRule::Crp(c) => {
                for s in 1..len {
                    self.log_exist[s] = (s as f64 - c.sigma).ln();
                }
            }
        }
    }

    pub fn log_existing(&self, size: usize) -> f64 {
        self.log_exist[size]
    }

    /// Weight of opening a new cluster when `k_minus` clusters remain.
    pub fn log_new(&self, k_minus: usize) -> f64 {
        let k1 = (k_minus + 1) as f64;
        match &self.rule {
            SizeRule::NegBin(nb) => k1.ln() + nb.log_gamma() + nb.r().ln(),
            SizeRule::Dirichlet { mu, .. } => k1.ln() + mu.log_probs()[0],
            SizeRule::Crp(c) => (c.theta + c.sigma * k_minus as f64).ln(),
        }
    }

    /// Makes sure weights exist for growing any cluster of size up to
    /// `max_size`.
    pub fn ensure<R: Rng + ?Sized>(&mut self, max_size: usize, rng: &mut R) {
        if let SizeRule::Dirichlet { mu, base, alpha } = &mut self.rule {
            if mu.truncation() < max_size + 1 {
                extend_explicit(mu, base, *alpha, (2 * (max_size + 1)).max(32), rng);
                self.tabulate();
            }
        }
    }
}

fn uniform_pair<R: Rng + ?Sized>(n: usize, rng: &mut R) -> (usize, usize) {
    let i = rng.random_range(0..n);
    let mut j = rng.random_range(0..n - 1);
    if j >= i {
        j += 1;
    }
    (i, j)
}

#[derive(Debug, Clone)]
struct Grouping {
    groups: Vec<Vec<usize>>,
    cum_pairs: Vec<u64>,
}

impl Grouping {
    fn build(records: &RecordTable, fields: &[usize]) -> Self {
        let mut index: HashMap<Vec<u32>, usize> = HashMap::new();
        let mut groups: Vec<Vec<usize>> = Vec::new();
        for i in 0..records.n() {
            let key: Vec<u32> = fields.iter().map(|&f| records.code(i, f)).collect();
            let g = *index.entry(key).or_insert_with(|| {
                groups.push(Vec::new());
                groups.len() - 1
            });
            groups[g].push(i);
        }
        groups.retain(|g| g.len() >= 2);
        let mut acc = 0u64;
        let cum_pairs = groups
            .iter()
            .map(|g| {
                let m = g.len() as u64;
                acc += m * (m - 1) / 2;
                acc
            })
            .collect();
        Self { groups, cum_pairs }
    }

    fn total(&self) -> u64 {
        self.cum_pairs.last().copied().unwrap_or(0)
    }
}

/// Chooses chaperone pairs using only the records, never the partition.
#[derive(Debug, Clone)]
pub struct ChaperoneSampler {
    bias: bool,
    groupings: BTreeMap<Vec<usize>, Grouping>,
}

impl ChaperoneSampler {
    pub fn new(bias: bool) -> Self {
        Self {
            bias,
            groupings: BTreeMap::new(),
        }
    }

    /// With bias on: pick a number of fields uniformly from `0..=L`, that
    /// many fields at random, then a uniform pair among records agreeing on
    /// all of them (a uniform pair if none agree). Requires `n >= 2`.
    pub fn pick<R: Rng + ?Sized>(&mut self, records: &RecordTable, rng: &mut R) -> (usize, usize) {
        let n = records.n();
        assert!(n >= 2, "chaperones need at least two records");
        let l = records.l();
        if !self.bias || l == 0 {
            return uniform_pair(n, rng);
        }
        let nf = rng.random_range(0..=l);
        if nf == 0 {
            return uniform_pair(n, rng);
        }
        let mut fields: Vec<usize> = (0..l).collect();
        for t in 0..nf {
            let u = rng.random_range(t..l);
            fields.swap(t, u);
        }
        fields.truncate(nf);
        fields.sort_unstable();
        let grouping = self
            .groupings
            .entry(fields)
            .or_insert_with_key(|f| Grouping::build(records, f));
        let total = grouping.total();
        if total == 0 {
            return uniform_pair(n, rng);
        }
        let u = rng.random_range(0..total);
        let g = grouping.cum_pairs.partition_point(|&c| c <= u);
        let members = &grouping.groups[g];
        let (a, b) = uniform_pair(members.len(), rng);
        (members[a], members[b])
    }
}

/// Sequentially redraws every record's cluster from its full conditional.
pub fn gibbs_scan<R: Rng + ?Sized>(
    state: &mut ClusterState,
    records: &RecordTable,
    tables: &LikTables,
    prior: &mut PriorWeights,
    rng: &mut R,
) {
    let mut logw = Vec::new();
    for i in 0..state.n() {
        let home = state.slot_of(i);
        let was_alone = state.size(home) == 1;
        state.remove(i, records, tables);
        prior.ensure(state.max_size(), rng);
        let row = records.row(i);
        logw.clear();
        for &c in state.active() {
            logw.push(prior.log_existing(state.size(c)) + state.slot(c).stats.delta_add(row, tables));
        }
        logw.push(prior.log_new(state.k()) + tables.singleton(row));
        let target = match sample_log_weights(&logw, rng) {
            Some(t) if t < state.k() => Some(state.active()[t]),
            Some(_) => None,
            // degenerate weights: leave the record where it was
            None => (!was_alone).then_some(home),
        };
        state.insert(i, target, records, tables);
    }
}

/// Holding chaperones `i` and `j` in place, redraws every other member of
/// their two clusters between those clusters, in random order. Does nothing
/// when they already share a cluster. Returns whether anything was swept.
pub fn chaperones_move<R: Rng + ?Sized>(
    state: &mut ClusterState,
    records: &RecordTable,
    tables: &LikTables,
    prior: &mut PriorWeights,
    (i, j): (usize, usize),
    rng: &mut R,
) -> bool {
    let (ci, cj) = (state.slot_of(i), state.slot_of(j));
    if ci == cj {
        return false;
    }
    let mut others: Vec<usize> = state
        .slot(ci)
        .members
        .iter()
        .chain(&state.slot(cj).members)
        .copied()
        .filter(|&k| k != i && k != j)
        .collect();
    // member order inside a slot depends on history, so fix it before shuffling
    others.sort_unstable();
    shuffle(&mut others, rng);
    for k in others {
        state.remove(k, records, tables);
        prior.ensure(state.max_size(), rng);
        let row = records.row(k);
        let wi = prior.log_existing(state.size(ci)) + state.slot(ci).stats.delta_add(row, tables);
        let wj = prior.log_existing(state.size(cj)) + state.slot(cj).stats.delta_add(row, tables);
        let target = match sample_log_weights(&[wi, wj], rng) {
            Some(1) => cj,
            _ => ci,
        };
        state.insert(k, Some(target), records, tables);
    }
    true
}
