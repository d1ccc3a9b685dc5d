//! Posterior sampling over partitions and hyperparameters.

pub mod diagnostics;
pub mod kernels;
pub mod state;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baseline::{log_cond_concentration, log_cond_discount, CrpParams};
use crate::error::{Error, Result};
use crate::esc::{default_truncation, log_cond_rp_escd, log_cond_rp_nb, sample_mu_posterior, EscHyper};
use crate::likelihood::{sample_beta_given, DistortionVector, LikTables, RecordTable};
use crate::partition::Partition;
use crate::size_dist::{SizeDistribution, TruncNegBin};
use crate::slice::{slice_sample, DEFAULT_MAX_STEPS};

pub use kernels::{chaperones_move, gibbs_scan, ChaperoneSampler, PriorWeights, SizeRule};
pub use state::ClusterState;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    EscNb,
    EscD,
    Dp,
    Py,
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "esc-nb" => Ok(Self::EscNb),
            "esc-d" => Ok(Self::EscD),
            "dp" => Ok(Self::Dp),
            "py" => Ok(Self::Py),
            other => Err(Error::Config(format!("unknown model '{other}'"))),
        }
    }
}

/// Prior family, hyperparameters and which of them are updated.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub hyper: EscHyper,
    /// Starting (or fixed) size-distribution parameters for the ESC models.
    pub r: f64,
    pub p: f64,
    pub update_rp: bool,
    /// Starting (or fixed) concentration and discount for DP/PY.
    pub theta: f64,
    pub sigma: f64,
    /// Gamma(shape, rate) prior on the concentration; rate defaults to `2/n`.
    pub theta_shape: f64,
    pub theta_rate: Option<f64>,
    pub update_theta: bool,
    pub update_sigma: bool,
}

impl ModelSpec {
    pub fn new(kind: ModelKind) -> Self {
        Self {
            kind,
            hyper: EscHyper::default(),
            r: 1.0,
            p: 0.5,
            update_rp: true,
            theta: 1.0,
            sigma: if kind == ModelKind::Py { 0.5 } else { 0.0 },
            theta_shape: 1.0,
            theta_rate: None,
            update_theta: true,
            update_sigma: false,
        }
    }

    /// Same model with every hyperparameter held at its starting value.
    pub fn fixed(mut self) -> Self {
        self.update_rp = false;
        self.update_theta = false;
        self.update_sigma = false;
        self
    }

    fn validate(&self) -> Result<()> {
        self.hyper.validate()?;
        match self.kind {
            ModelKind::EscNb | ModelKind::EscD => {
                TruncNegBin::new(self.r, self.p)?;
            }
            ModelKind::Dp => {
                if self.sigma != 0.0 {
                    return Err(Error::Config("the DP has no discount".into()));
                }
                CrpParams::new(self.theta, 0.0)?;
            }
            ModelKind::Py => {
                CrpParams::new(self.theta, self.sigma)?;
            }
        }
        if !(self.theta_shape > 0.0) || self.theta_rate.is_some_and(|r| !(r > 0.0)) {
            return Err(Error::Config("concentration prior must have positive shape and rate".into()));
        }
        if matches!(self.kind, ModelKind::Dp | ModelKind::Py) && self.update_theta && !(self.theta > 0.0) {
            return Err(Error::Config("a sampled concentration must start positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BetaMode {
    Fixed,
    Inferred,
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitialPartition {
    Singletons,
    OneCluster,
    Given(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainConfig {
    pub model: ModelSpec,
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    /// Partition kernel applications per iteration.
    pub moves_per_iter: usize,
    /// A full Gibbs scan follows every `gibbs_every` chaperones moves
    /// (0 disables scans).
    pub gibbs_every: usize,
    pub seed: u64,
    pub beta_mode: BetaMode,
    /// Starting (or fixed) distortion, one value per field or a single value
    /// for all fields.
    pub beta: Vec<f64>,
    pub beta_prior: (f64, f64),
    pub chaperone_bias: bool,
    pub init: InitialPartition,
}

impl ChainConfig {
    pub fn new(model: ModelSpec) -> Self {
        Self {
            model,
            iterations: 20_000,
            burn_in: 5_000,
            thin: 1,
            moves_per_iter: 1000,
            gibbs_every: 100,
            seed: 0,
            beta_mode: BetaMode::Fixed,
            beta: vec![0.01],
            beta_prior: (0.24375, 48.50625),
            chaperone_bias: true,
            init: InitialPartition::Singletons,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if self.iterations <= self.burn_in {
            return Err(Error::Config(format!(
                "iterations ({}) must exceed burn_in ({})",
                self.iterations, self.burn_in
            )));
        }
        if self.thin == 0 {
            return Err(Error::Config("thin must be at least 1".into()));
        }
        if self.beta.iter().any(|b| !(*b > 0.0 && *b < 1.0)) {
            return Err(Error::Config("beta values must lie in (0, 1)".into()));
        }
        if !(self.beta_prior.0 > 0.0 && self.beta_prior.1 > 0.0) {
            return Err(Error::Config("beta prior shapes must be positive".into()));
        }
        Ok(())
    }

    /// Number of samples a full run records.
    pub fn trace_len(&self) -> usize {
        (self.iterations - self.burn_in) / self.thin
    }
}

/// One recorded state. Allocations are canonical and 0-based.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceSample {
    pub iteration: usize,
    pub k: usize,
    pub r: Option<f64>,
    pub p: Option<f64>,
    pub theta: Option<f64>,
    pub sigma: Option<f64>,
    pub beta: Vec<f64>,
    pub allocations: Vec<usize>,
}

impl TraceSample {
    pub fn partition(&self) -> Result<Partition> {
        if self.allocations.is_empty() {
            return Err(Error::MissingAllocations);
        }
        Partition::from_allocations(&self.allocations)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trace {
    pub samples: Vec<TraceSample>,
}

impl Trace {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Scalar series of one column.
    pub fn series<F: Fn(&TraceSample) -> f64>(&self, f: F) -> Vec<f64> {
        self.samples.iter().map(f).collect()
    }
}

/// A running chain. `iterate` performs one global update followed by the
/// configured partition moves; the finer-grained methods are exposed for
/// tests that watch the chain move by move.
pub struct Chain<'a> {
    config: ChainConfig,
    records: &'a RecordTable,
    rng: ChaCha8Rng,
    state: ClusterState,
    tables: LikTables,
    prior: PriorWeights,
    chaperones: ChaperoneSampler,
    beta: DistortionVector,
    r: f64,
    p: f64,
    theta: f64,
    sigma: f64,
    theta_rate: f64,
    since_scan: u64,
    iteration: usize,
}

impl<'a> Chain<'a> {
    pub fn new(config: ChainConfig, records: &'a RecordTable) -> Result<Self> {
        config.validate()?;
        let n = records.n();
        if n == 0 {
            return Err(Error::InvalidParameter("no records".into()));
        }
        let l = records.l();
        let beta_values = match config.beta.len() {
            1 => vec![config.beta[0]; l],
            len if len == l => config.beta.clone(),
            len => {
                return Err(Error::DimensionMismatch(format!(
                    "{len} beta values for {l} fields"
                )))
            }
        };
        let beta = DistortionVector::new(beta_values, config.beta_prior.0, config.beta_prior.1);
        let partition = match &config.init {
            InitialPartition::Singletons => Partition::singletons(n)?,
            InitialPartition::OneCluster => Partition::from_allocations(&vec![0; n])?,
            InitialPartition::Given(z) => {
                if z.len() != n {
                    return Err(Error::DimensionMismatch(format!(
                        "initial partition has {} labels for {n} records",
                        z.len()
                    )));
                }
                Partition::from_allocations(z)?
            }
        };
        let tables = LikTables::new(records, beta.values());
        let state = ClusterState::new(&partition, records, &tables);
        let m = &config.model;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let prior = initial_prior(m, &state, n, &mut rng)?;
        Ok(Self {
            records,
            rng,
            state,
            tables,
            prior,
            chaperones: ChaperoneSampler::new(config.chaperone_bias),
            beta,
            r: m.r,
            p: m.p,
            theta: m.theta,
            sigma: m.sigma,
            theta_rate: m.theta_rate.unwrap_or(2.0 / n as f64),
            since_scan: 0,
            iteration: 0,
            config,
        })
    }

    pub fn partition(&self) -> Partition {
        self.state.partition()
    }

    pub fn state(&self) -> &ClusterState {
        &self.state
    }

    /// Updates the hyperparameters given the partition: `(r, p)` for the
    /// ESC models (then `mu` for ESC-D), the concentration (and optionally
    /// discount) for DP/PY, and `beta` when inferred.
    pub fn global_update(&mut self) -> Result<()> {
        let model = self.config.model.clone();
        let n = self.records.n();
        match model.kind {
            ModelKind::EscNb | ModelKind::EscD => {
                if model.update_rp {
                    let occ = self.state.occupancy();
                    let h = model.hyper;
                    let f: fn(&crate::esc::Occupancy, f64, f64, &EscHyper) -> f64 = if model.kind == ModelKind::EscNb {
                        log_cond_rp_nb
                    } else {
                        log_cond_rp_escd
                    };
                    let p = self.p;
                    self.r = slice_sample(self.r, |r| f(&occ, r, p, &h), 1.0, DEFAULT_MAX_STEPS, &mut self.rng)?;
                    let r = self.r;
                    self.p = slice_sample(self.p, |p| f(&occ, r, p, &h), 0.1, DEFAULT_MAX_STEPS, &mut self.rng)?;
                }
                let nb = TruncNegBin::new(self.r, self.p)?;
                let rule = if model.kind == ModelKind::EscNb {
                    SizeRule::NegBin(nb)
                } else {
                    draw_dirichlet_rule(&self.state, nb, model.hyper.alpha, &mut self.rng)?
                };
                self.prior = PriorWeights::new(rule, n);
            }
            ModelKind::Dp | ModelKind::Py => {
                let k = self.state.k();
                if model.update_theta {
                    let (sigma, shape, rate) = (self.sigma, model.theta_shape, self.theta_rate);
                    let width = (n as f64 / 10.0).max(1.0);
                    self.theta = slice_sample(
                        self.theta,
                        |t| log_cond_concentration(k, n, t, sigma, shape, rate),
                        width,
                        DEFAULT_MAX_STEPS,
                        &mut self.rng,
                    )?;
                }
                if model.kind == ModelKind::Py && model.update_sigma {
                    let part = self.state.partition();
                    let theta = self.theta;
                    self.sigma = slice_sample(
                        self.sigma,
                        |s| log_cond_discount(&part, theta, s),
                        0.1,
                        DEFAULT_MAX_STEPS,
                        &mut self.rng,
                    )?;
                }
                self.prior = PriorWeights::new(SizeRule::Crp(CrpParams::new(self.theta, self.sigma)?), n);
            }
        }
        if self.config.beta_mode == BetaMode::Inferred && self.records.l() > 0 {
            self.beta = sample_beta_given(self.state.stats(), self.records, &self.beta, &mut self.rng)?;
            self.tables = LikTables::new(self.records, self.beta.values());
            self.state.refresh(&self.tables, self.records);
        }
        Ok(())
    }

    /// One partition kernel application: a chaperones move, or a full Gibbs
    /// scan once `gibbs_every` chaperones moves have passed since the last
    /// one (always a scan when `n < 2`).
    pub fn partition_kernel(&mut self) {
        let every = self.config.gibbs_every as u64;
        if self.records.n() < 2 || (every > 0 && self.since_scan >= every) {
            gibbs_scan(&mut self.state, self.records, &self.tables, &mut self.prior, &mut self.rng);
            self.since_scan = 0;
            return;
        }
        let pair = self.chaperones.pick(self.records, &mut self.rng);
        chaperones_move(&mut self.state, self.records, &self.tables, &mut self.prior, pair, &mut self.rng);
        self.since_scan += 1;
    }

    pub fn gibbs_scan(&mut self) {
        gibbs_scan(&mut self.state, self.records, &self.tables, &mut self.prior, &mut self.rng);
    }

    /// One outer iteration.
    pub fn iterate(&mut self) -> Result<()> {
        self.global_update()?;
        for _ in 0..self.config.moves_per_iter {
            self.partition_kernel();
        }
        self.iteration += 1;
        Ok(())
    }

    pub fn sample(&self) -> TraceSample {
        let esc = matches!(self.config.model.kind, ModelKind::EscNb | ModelKind::EscD);
        let crp = !esc;
        let partition = self.state.partition();
        TraceSample {
            iteration: self.iteration,
            k: partition.k(),
            r: esc.then_some(self.r),
            p: esc.then_some(self.p),
            theta: crp.then_some(self.theta),
            sigma: (self.config.model.kind == ModelKind::Py).then_some(self.sigma),
            beta: self.beta.values().to_vec(),
            allocations: partition.allocations().to_vec(),
        }
    }

    /// Runs the configured number of iterations, recording after iteration
    /// `t` whenever `t > burn_in` and `(t - burn_in)` is a multiple of `thin`.
    pub fn run(mut self) -> Result<Trace> {
        let mut trace = Trace {
            samples: Vec::with_capacity(self.config.trace_len()),
        };
        for t in 1..=self.config.iterations {
            self.iterate()?;
            if t > self.config.burn_in && (t - self.config.burn_in) % self.config.thin == 0 {
                trace.samples.push(self.sample());
            }
        }
        Ok(trace)
    }
}

fn draw_dirichlet_rule(state: &ClusterState, nb: TruncNegBin, alpha: f64, rng: &mut ChaCha8Rng) -> Result<SizeRule> {
    let m = default_truncation(state.max_size());
    match sample_mu_posterior(&state.occupancy(), alpha, &nb, m, rng)? {
        SizeDistribution::Explicit(mu) => Ok(SizeRule::Dirichlet { mu, base: nb, alpha }),
        SizeDistribution::NegBin(_) => unreachable!("posterior draws are explicit"),
    }
}

fn initial_prior(m: &ModelSpec, state: &ClusterState, n: usize, rng: &mut ChaCha8Rng) -> Result<PriorWeights> {
    let rule = match m.kind {
        ModelKind::EscNb => SizeRule::NegBin(TruncNegBin::new(m.r, m.p)?),
        ModelKind::EscD => draw_dirichlet_rule(state, TruncNegBin::new(m.r, m.p)?, m.hyper.alpha, rng)?,
        ModelKind::Dp | ModelKind::Py => SizeRule::Crp(CrpParams::new(m.theta, m.sigma)?),
    };
    Ok(PriorWeights::new(rule, n))
}

pub fn run_chain(config: &ChainConfig, records: &RecordTable) -> Result<Trace> {
    Chain::new(config.clone(), records)?.run()
}

/// Runs `chains` independent chains in parallel with seeds `seed + c`.
pub fn run_chains(config: &ChainConfig, records: &RecordTable, chains: usize) -> Result<Vec<Trace>> {
    (0..chains)
        .into_par_iter()
        .map(|c| {
            let mut cfg = config.clone();
            cfg.seed = config.seed.wrapping_add(c as u64);
            run_chain(&cfg, records)
        })
        .collect()
}
