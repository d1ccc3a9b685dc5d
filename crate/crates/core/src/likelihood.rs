//! Categorical spike-and-slab record likelihood with the latent entity
//! values integrated out.
//!
//! For one field of one cluster with values `x_1..x_q`, the collapsed
//! likelihood is `sum_d theta_d prod_i [beta theta_{x_i} + (1 - beta) 1(x_i = d)]`,
//! evaluated as `A * f` with `A = prod_i beta theta_{x_i}` and
//! `f = (1 - sum_U theta_u) + sum_U theta_u R_u^{q_u}`,
//! `R_u = (beta theta_u + 1 - beta) / (beta theta_u)`, `U` the distinct values.

use std::collections::BTreeMap;
use std::hash::{DefaultHasher, Hash, Hasher};

use rand::distr::weighted::WeightedIndex;
use rand::Rng;
use rand_distr::Distribution;

use crate::error::{Error, Result};
use crate::math::{log_sum_exp, softplus};
use crate::partition::{Partition, Target};
use crate::slice::{slice_sample, DEFAULT_MAX_STEPS};

pub const BETA_EPS: f64 = 1e-8;
/// Below this distortion the factored form is replaced by the direct sum.
pub const DIRECT_FORM_BELOW: f64 = 1e-6;

/// `n x L` table of 0-based category codes with per-field category
/// frequencies `theta`.
#[derive(Debug, Clone, PartialEq)]
pub struct RecordTable {
    n: usize,
    l: usize,
    codes: Vec<u32>,
    cat_counts: Vec<usize>,
    theta: Vec<Vec<f64>>,
}

impl RecordTable {
    /// Builds a table from row-major codes; `theta` defaults to the
    /// empirical frequencies.
    pub fn new(n: usize, cat_counts: Vec<usize>, codes: Vec<u32>) -> Result<Self> {
        let l = cat_counts.len();
        if codes.len() != n * l {
            return Err(Error::DimensionMismatch(format!(
                "{} codes for a {n} x {l} table",
                codes.len()
            )));
        }
        for (idx, &c) in codes.iter().enumerate() {
            let field = idx % l;
            if c as usize >= cat_counts[field] {
                return Err(Error::InvalidParameter(format!(
                    "code {c} out of range for field {field} with {} categories",
                    cat_counts[field]
                )));
            }
        }
        let mut table = Self {
            n,
            l,
            codes,
            cat_counts,
            theta: Vec::new(),
        };
        table.theta = empirical_theta(&table);
        Ok(table)
    }

    pub fn from_rows(rows: &[Vec<u32>], cat_counts: Vec<usize>) -> Result<Self> {
        let l = cat_counts.len();
        if let Some((i, _)) = rows.iter().enumerate().find(|(_, r)| r.len() != l) {
            return Err(Error::DimensionMismatch(format!("row {i} has the wrong number of fields")));
        }
        Self::new(rows.len(), cat_counts, rows.concat())
    }

    /// A table with no fields, whose likelihood is constant.
    pub fn empty(n: usize) -> Self {
        Self {
            n,
            l: 0,
            codes: Vec::new(),
            cat_counts: Vec::new(),
            theta: Vec::new(),
        }
    }

    /// Replaces `theta`; every observed category must keep positive mass.
    pub fn with_theta(mut self, theta: Vec<Vec<f64>>) -> Result<Self> {
        if theta.len() != self.l {
            return Err(Error::DimensionMismatch("theta must have one array per field".into()));
        }
        for (f, t) in theta.iter().enumerate() {
            if t.len() != self.cat_counts[f] {
                return Err(Error::DimensionMismatch(format!(
                    "theta for field {f} has {} entries, expected {}",
                    t.len(),
                    self.cat_counts[f]
                )));
            }
            let total: f64 = t.iter().sum();
            if t.iter().any(|&x| !(x >= 0.0)) || (total - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidParameter(format!("theta for field {f} is not a distribution")));
            }
        }
        for i in 0..self.n {
            for f in 0..self.l {
                let c = self.code(i, f) as usize;
                if !(theta[f][c] > 0.0) {
                    return Err(Error::ZeroThetaMass { field: f, code: c });
                }
            }
        }
        self.theta = theta;
        Ok(self)
    }

    pub fn with_uniform_theta(self) -> Self {
        let theta = self
            .cat_counts
            .iter()
            .map(|&d| vec![1.0 / d as f64; d])
            .collect();
        self.with_theta(theta).expect("uniform theta covers every category")
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn l(&self) -> usize {
        self.l
    }

    pub fn code(&self, i: usize, field: usize) -> u32 {
        self.codes[i * self.l + field]
    }

    pub fn row(&self, i: usize) -> &[u32] {
        &self.codes[i * self.l..(i + 1) * self.l]
    }

    pub fn cat_counts(&self) -> &[usize] {
        &self.cat_counts
    }

    pub fn theta(&self) -> &[Vec<f64>] {
        &self.theta
    }
}

/// `theta_{ld}` = share of records with category `d` in field `l`.
pub fn empirical_theta(records: &RecordTable) -> Vec<Vec<f64>> {
    let mut theta: Vec<Vec<f64>> = records.cat_counts.iter().map(|&d| vec![0.0; d]).collect();
    for i in 0..records.n {
        for (f, t) in theta.iter_mut().enumerate() {
            t[records.code(i, f) as usize] += 1.0;
        }
    }
    let n = records.n as f64;
    for t in &mut theta {
        for x in t.iter_mut() {
            *x /= n;
        }
    }
    theta
}

/// Per-field distortion probabilities with a shared Beta prior.
#[derive(Debug, Clone, PartialEq)]
pub struct DistortionVector {
    beta: Vec<f64>,
    pub prior_a: f64,
    pub prior_b: f64,
}

impl DistortionVector {
    pub fn new(beta: Vec<f64>, prior_a: f64, prior_b: f64) -> Self {
        Self {
            beta: beta.into_iter().map(clamp_beta).collect(),
            prior_a,
            prior_b,
        }
    }

    pub fn constant(l: usize, beta: f64, prior_a: f64, prior_b: f64) -> Self {
        Self::new(vec![beta; l], prior_a, prior_b)
    }

    pub fn values(&self) -> &[f64] {
        &self.beta
    }

    fn log_prior(&self, b: f64) -> f64 {
        if !(b > BETA_EPS && b < 1.0 - BETA_EPS) {
            return f64::NEG_INFINITY;
        }
        (self.prior_a - 1.0) * b.ln() + (self.prior_b - 1.0) * (-b).ln_1p()
    }
}

pub fn clamp_beta(b: f64) -> f64 {
    b.clamp(BETA_EPS, 1.0 - BETA_EPS)
}

/// Moment-matched Beta shapes for a given mean and standard deviation.
pub fn beta_prior_from_moments(mean: f64, sd: f64) -> Result<(f64, f64)> {
    if !(mean > 0.0 && mean < 1.0) {
        return Err(Error::InvalidParameter(format!("mean must lie in (0, 1), got {mean}")));
    }
    let var = sd * sd;
    let max = mean * (1.0 - mean);
    if !(var > 0.0 && var < max) {
        return Err(Error::InfeasibleMoments { var, max });
    }
    let c = max / var - 1.0;
    Ok((mean * c, (1.0 - mean) * c))
}

/// Returns `(log A, log A + log f)` for one field of one cluster, given its
/// distinct values and their counts.
fn field_terms(entries: &[(u32, u32)], beta: f64, theta: &[f64]) -> (f64, f64) {
    if entries.is_empty() {
        return (0.0, 0.0);
    }
    let sum_theta: f64 = entries.iter().map(|&(c, _)| theta[c as usize]).sum();
    let rest = (1.0 - sum_theta).max(0.0).ln();
    let log_bt: Vec<f64> = entries.iter().map(|&(c, _)| (beta * theta[c as usize]).ln()).collect();
    let log_a: f64 = entries.iter().zip(&log_bt).map(|(&(_, q), lb)| q as f64 * lb).sum();
    let mut terms = Vec::with_capacity(entries.len() + 1);
    if beta < DIRECT_FORM_BELOW {
        // sum over d of theta_d prod_i [...], never dividing by beta
        terms.push(rest + log_a);
        for (k, &(c, q)) in entries.iter().enumerate() {
            let th = theta[c as usize];
            let others: f64 = entries
                .iter()
                .zip(&log_bt)
                .enumerate()
                .filter(|(j, _)| *j != k)
                .map(|(_, (&(_, qj), lb))| qj as f64 * lb)
                .sum();
            terms.push(th.ln() + others + q as f64 * (beta * th + 1.0 - beta).ln());
        }
        (log_a, log_sum_exp(&terms))
    } else {
        terms.push(rest);
        for (&(c, q), lb) in entries.iter().zip(&log_bt) {
            let th = theta[c as usize];
            let log_r = (beta * th + 1.0 - beta).ln() - lb;
            terms.push(th.ln() + q as f64 * log_r);
        }
        (log_a, log_a + log_sum_exp(&terms))
    }
}

fn counts_of(values: &[u32]) -> Vec<(u32, u32)> {
    let mut m: BTreeMap<u32, u32> = BTreeMap::new();
    for &v in values {
        *m.entry(v).or_insert(0) += 1;
    }
    m.into_iter().collect()
}

/// Log collapsed likelihood of one field of one cluster.
pub fn cluster_field_loglik(values: &[u32], beta: f64, theta: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::InvalidParameter("cluster must be nonempty".into()));
    }
    if !(0.0..=1.0).contains(&beta) {
        return Err(Error::InvalidParameter(format!("beta must lie in [0, 1], got {beta}")));
    }
    for &v in values {
        match theta.get(v as usize) {
            Some(&t) if t > 0.0 => {}
            Some(_) => return Err(Error::ZeroThetaMass { field: 0, code: v as usize }),
            None => {
                return Err(Error::DimensionMismatch(format!(
                    "code {v} outside theta of length {}",
                    theta.len()
                )))
            }
        }
    }
    if let [v] = values {
        // the distortion mixture integrates out for a lone record
        return Ok(theta[*v as usize].ln());
    }
    Ok(field_terms(&counts_of(values), beta, theta).1)
}

/// Sum of the collapsed log likelihood over clusters and fields.
pub fn partition_loglik(records: &RecordTable, partition: &Partition, beta: &[f64]) -> Result<f64> {
    check_dims(records, partition, beta)?;
    let mut total = 0.0;
    for members in partition.clusters() {
        for (f, &b) in beta.iter().enumerate() {
            let values: Vec<u32> = members.iter().map(|&i| records.code(i, f)).collect();
            total += cluster_field_loglik(&values, b, &records.theta[f])?;
        }
    }
    Ok(total)
}

fn check_dims(records: &RecordTable, partition: &Partition, beta: &[f64]) -> Result<()> {
    if records.n != partition.n() {
        return Err(Error::DimensionMismatch(format!(
            "{} records but the partition covers {}",
            records.n,
            partition.n()
        )));
    }
    if records.l != beta.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} fields but {} distortion probabilities",
            records.l,
            beta.len()
        )));
    }
    Ok(())
}

/// Per-code logarithms used by the O(1) insertion delta.
#[derive(Debug, Clone)]
pub struct LikTables {
    fields: Vec<FieldTable>,
}

#[derive(Debug, Clone)]
struct FieldTable {
    beta: f64,
    log_theta: Vec<f64>,
    log_bt: Vec<f64>,
    log_r: Vec<f64>,
    log_r_minus_1: Vec<f64>,
}

impl LikTables {
    /// Requires every `beta` in `(0, 1)`.
    pub fn new(records: &RecordTable, beta: &[f64]) -> Self {
        let fields = records
            .theta
            .iter()
            .zip(beta)
            .map(|(theta, &b)| {
                let log_theta: Vec<f64> = theta.iter().map(|t| t.ln()).collect();
                let log_bt: Vec<f64> = log_theta.iter().map(|lt| b.ln() + lt).collect();
                let log_r = theta
                    .iter()
                    .zip(&log_bt)
                    .map(|(t, lb)| (b * t + 1.0 - b).ln() - lb)
                    .collect();
                let log_r_minus_1 = log_bt.iter().map(|lb| (1.0 - b).ln() - lb).collect();
                FieldTable {
                    beta: b,
                    log_theta,
                    log_bt,
                    log_r,
                    log_r_minus_1,
                }
            })
            .collect();
        Self { fields }
    }

    /// Log likelihood of a singleton cluster holding `row`.
    pub fn singleton(&self, row: &[u32]) -> f64 {
        self.fields
            .iter()
            .zip(row)
            .map(|(ft, &c)| ft.log_theta[c as usize])
            .sum()
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
struct FieldStats {
    entries: Vec<(u32, u32)>,
    log_a: f64,
    total: f64,
}

/// Value counts and cached log likelihood terms of one cluster.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterStats {
    size: usize,
    fields: Vec<FieldStats>,
}

impl ClusterStats {
    pub fn new(l: usize) -> Self {
        Self {
            size: 0,
            fields: vec![FieldStats::default(); l],
        }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    /// Cached log likelihood of the cluster (0 when empty).
    pub fn loglik(&self) -> f64 {
        self.fields.iter().map(|f| f.total).sum()
    }

    /// Change in log likelihood from inserting `row`: per field,
    /// `log(beta theta_x) + softplus(log w - log f)` with
    /// `w = theta_x R_x^q (R_x - 1)` and `q` the current count of `x`.
    pub fn delta_add(&self, row: &[u32], tables: &LikTables) -> f64 {
        let mut delta = 0.0;
        for ((fs, ft), &c) in self.fields.iter().zip(&tables.fields).zip(row) {
            let c_us = c as usize;
            let q = fs
                .entries
                .iter()
                .find(|e| e.0 == c)
                .map_or(0, |e| e.1);
            let log_w = ft.log_theta[c_us] + q as f64 * ft.log_r[c_us] + ft.log_r_minus_1[c_us];
            let log_f = fs.total - fs.log_a;
            delta += ft.log_bt[c_us] + softplus(log_w - log_f);
        }
        delta
    }

    pub fn add(&mut self, row: &[u32], tables: &LikTables, theta: &[Vec<f64>]) {
        self.size += 1;
        for (f, &c) in row.iter().enumerate() {
            let fs = &mut self.fields[f];
            match fs.entries.iter_mut().find(|e| e.0 == c) {
                Some(e) => e.1 += 1,
                None => fs.entries.push((c, 1)),
            }
            let (a, t) = field_terms(&fs.entries, tables.fields[f].beta, &theta[f]);
            fs.log_a = a;
            fs.total = t;
        }
    }

    pub fn remove(&mut self, row: &[u32], tables: &LikTables, theta: &[Vec<f64>]) {
        self.size -= 1;
        for (f, &c) in row.iter().enumerate() {
            let fs = &mut self.fields[f];
            let pos = fs
                .entries
                .iter()
                .position(|e| e.0 == c)
                .expect("removing a value the cluster does not hold");
            fs.entries[pos].1 -= 1;
            if fs.entries[pos].1 == 0 {
                fs.entries.swap_remove(pos);
            }
            let (a, t) = field_terms(&fs.entries, tables.fields[f].beta, &theta[f]);
            fs.log_a = a;
            fs.total = t;
        }
    }

    /// Recomputes every cached term, e.g. after `beta` changed.
    pub fn refresh(&mut self, tables: &LikTables, theta: &[Vec<f64>]) {
        for (f, fs) in self.fields.iter_mut().enumerate() {
            let (a, t) = field_terms(&fs.entries, tables.fields[f].beta, &theta[f]);
            fs.log_a = a;
            fs.total = t;
        }
    }

    fn field_loglik_at(&self, field: usize, beta: f64, theta: &[f64]) -> f64 {
        field_terms(&self.fields[field].entries, beta, theta).1
    }
}

fn partition_checksum(p: &Partition) -> u64 {
    let mut h = DefaultHasher::new();
    p.allocations().hash(&mut h);
    h.finish()
}

/// Cluster statistics for a fixed partition, for evaluating single-record
/// moves without touching the other clusters.
#[derive(Debug, Clone)]
pub struct LikelihoodCache {
    clusters: Vec<ClusterStats>,
    tables: LikTables,
    checksum: u64,
}

impl LikelihoodCache {
    pub fn new(records: &RecordTable, partition: &Partition, beta: &[f64]) -> Result<Self> {
        check_dims(records, partition, beta)?;
        let tables = LikTables::new(records, beta);
        let mut clusters = vec![ClusterStats::new(records.l); partition.k()];
        for i in 0..records.n {
            clusters[partition.cluster_of(i)].add(records.row(i), &tables, &records.theta);
        }
        Ok(Self {
            clusters,
            tables,
            checksum: partition_checksum(partition),
        })
    }

    pub fn total(&self) -> f64 {
        self.clusters.iter().map(ClusterStats::loglik).sum()
    }
}

/// Change in `partition_loglik` from moving record `i` to `target`.
pub fn loglik_delta_move(
    cache: &LikelihoodCache,
    records: &RecordTable,
    partition: &Partition,
    i: usize,
    target: Target,
) -> Result<f64> {
    if partition_checksum(partition) != cache.checksum || cache.clusters.len() != partition.k() {
        return Err(Error::StaleCache("cache was built for a different partition".into()));
    }
    if i >= partition.n() {
        return Err(Error::RecordOutOfRange { index: i, n: partition.n() });
    }
    let from = partition.cluster_of(i);
    if let Target::Existing(c) = target {
        if c >= partition.k() {
            return Err(Error::InvalidTarget { label: c, k: partition.k() });
        }
        if c == from {
            return Ok(0.0);
        }
    }
    let row = records.row(i);
    let mut src = cache.clusters[from].clone();
    let before = src.loglik();
    src.remove(row, &cache.tables, &records.theta);
    let gain = match target {
        Target::New => cache.tables.singleton(row),
        Target::Existing(c) => cache.clusters[c].delta_add(row, &cache.tables),
    };
    Ok(src.loglik() - before + gain)
}

/// Slice-samples each `beta_l` given the clusters, under the Beta prior.
/// Singleton clusters do not depend on `beta` and can be left out.
pub fn sample_beta_given<'a, I, R>(
    clusters: I,
    records: &RecordTable,
    beta: &DistortionVector,
    rng: &mut R,
) -> Result<DistortionVector>
where
    I: IntoIterator<Item = &'a ClusterStats>,
    R: Rng + ?Sized,
{
    let informative: Vec<&ClusterStats> = clusters.into_iter().filter(|c| c.size >= 2).collect();
    let mut out = beta.clone();
    for f in 0..records.l {
        let theta = &records.theta[f];
        let log_post = |b: f64| {
            let prior = beta.log_prior(b);
            if prior == f64::NEG_INFINITY {
                return prior;
            }
            prior + informative.iter().map(|c| c.field_loglik_at(f, b, theta)).sum::<f64>()
        };
        let b = slice_sample(beta.beta[f], log_post, 0.05, DEFAULT_MAX_STEPS, rng)?;
        out.beta[f] = clamp_beta(b);
    }
    Ok(out)
}

pub fn sample_beta<R: Rng + ?Sized>(
    records: &RecordTable,
    partition: &Partition,
    beta: &DistortionVector,
    rng: &mut R,
) -> Result<DistortionVector> {
    let cache = LikelihoodCache::new(records, partition, beta.values())?;
    sample_beta_given(&cache.clusters, records, beta, rng)
}

/// Draws a table from the spike-and-slab model: each cluster gets a latent
/// value per field from `theta`, and each record keeps it with probability
/// `1 - beta` or redraws from `theta`.
pub fn sample_records<R: Rng + ?Sized>(
    partition: &Partition,
    theta: &[Vec<f64>],
    beta: &[f64],
    rng: &mut R,
) -> Result<RecordTable> {
    if theta.len() != beta.len() {
        return Err(Error::DimensionMismatch("theta and beta lengths differ".into()));
    }
    if let Some(b) = beta.iter().find(|b| !(0.0..=1.0).contains(*b)) {
        return Err(Error::InvalidParameter(format!("beta must lie in [0, 1], got {b}")));
    }
    let l = theta.len();
    let samplers: Vec<WeightedIndex<f64>> = theta
        .iter()
        .map(|t| WeightedIndex::new(t).map_err(|e| Error::InvalidParameter(format!("theta: {e}"))))
        .collect::<Result<_>>()?;
    let n = partition.n();
    let mut codes = vec![0u32; n * l];
    for members in partition.clusters() {
        for f in 0..l {
            let latent = samplers[f].sample(rng) as u32;
            for &i in &members {
                let distort = rng.random::<f64>() < beta[f];
                codes[i * l + f] = if distort { samplers[f].sample(rng) as u32 } else { latent };
            }
        }
    }
    let cat_counts = theta.iter().map(Vec::len).collect();
    RecordTable::new(n, cat_counts, codes)?.with_theta(theta.to_vec())
}
