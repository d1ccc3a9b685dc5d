use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use microclust::asymptotics::{asymptotic_estimates, tv_to_mu};
use microclust::baseline::{crp_sample, CrpParams};
use microclust::esc::EscHyper;
use microclust::evaluation::{posterior_rates, posterior_summaries};
use microclust::io::{
    load_records, load_truth, read_trace_file, write_boxplot_jsonl, write_records, write_table, write_trace_file,
    CategoryWeights, Dataset, RunConfig,
};
use microclust::mcmc::diagnostics::diagnostics;
use microclust::mcmc::{run_chains, ModelKind, Trace};
use microclust::prior_sampling::{importance_sample, rejection_sample, MuPrior};
use microclust::synthetic::{generate_dataset, scenario_partition, ScenarioSpec};
use microclust::{Error, SizeDistribution};

#[derive(Parser)]
#[command(name = "microclust", version, about = "Microclustering partition priors and Bayesian entity resolution")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a scenario dataset: writes data.csv and truth.csv.
    Simulate {
        #[arg(long)]
        scenario: u32,
        #[arg(long, default_value_t = 0.01)]
        beta: f64,
        #[arg(long, default_value_t = 5)]
        fields: usize,
        #[arg(long, default_value_t = 10)]
        categories: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Run the posterior sampler; writes one trace per chain.
    Fit {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides the config file's model.
        #[arg(long)]
        model: Option<ModelKind>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 1)]
        chains: usize,
        #[arg(long)]
        iterations: Option<usize>,
        #[arg(long)]
        burn_in: Option<usize>,
        #[arg(long)]
        thin: Option<usize>,
        #[arg(long)]
        moves_per_iter: Option<usize>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Draw partitions from a prior.
    PriorSample {
        #[arg(long)]
        model: ModelKind,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 1)]
        draws: usize,
        #[arg(long, value_enum, default_value_t = Method::Rejection)]
        method: Method,
        /// Fix the size-distribution parameters instead of drawing them.
        #[arg(long, requires = "p")]
        r: Option<f64>,
        #[arg(long, requires = "r")]
        p: Option<f64>,
        #[arg(long, default_value_t = 1.0)]
        alpha: f64,
        #[arg(long, default_value_t = 1.0)]
        theta: f64,
        #[arg(long)]
        sigma: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Defaults to standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Large-n behaviour of exact prior draws with a negative binomial size
    /// distribution.
    Asymptotics {
        #[arg(long, default_value_t = 1.0)]
        r: f64,
        #[arg(long, default_value_t = 0.5)]
        p: f64,
        #[arg(long, value_delimiter = ',', default_value = "100,1000,10000")]
        n: Vec<usize>,
        #[arg(long, default_value_t = 200)]
        reps: usize,
        #[arg(long, default_value_t = 10)]
        smax: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Posterior error rates of a trace against the truth.
    Evaluate {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        /// Also write per-size occupancy quantiles as JSON lines.
        #[arg(long)]
        boxplot: Option<PathBuf>,
        /// Accepted for a uniform interface; evaluation is deterministic.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Effective sample sizes and Monte Carlo errors of trace columns.
    Diagnose {
        #[arg(long)]
        trace: PathBuf,
        /// Accepted for a uniform interface; diagnostics are deterministic.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Method {
    Rejection,
    Importance,
}

enum Failure {
    Usage(anyhow::Error),
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        match e.downcast_ref::<Error>() {
            Some(Error::Config(_)) => Failure::Usage(e),
            _ => Failure::Runtime(e),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        anyhow::Error::from(e).into()
    }
}

type CliResult = std::result::Result<(), Failure>;

fn output(path: &Option<PathBuf>) -> anyhow::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(io::BufWriter::new(
            fs::File::create(p).with_context(|| format!("cannot create {}", p.display()))?,
        )),
        None => Box::new(io::stdout().lock()),
    })
}

fn fmt(x: f64) -> String {
    x.to_string()
}

fn simulate(scenario: u32, beta: f64, fields: usize, categories: usize, seed: u64, out: &Path) -> CliResult {
    if !(0.0..=1.0).contains(&beta) || fields == 0 || categories == 0 {
        return Err(Failure::Usage(anyhow!(
            "need beta in [0, 1] and at least one field and category"
        )));
    }
    let mut spec = ScenarioSpec::preset(scenario, beta)?;
    spec.l = fields;
    spec.d = categories;
    let truth = scenario_partition(&spec)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (records, _) = generate_dataset(&truth, &spec, None, &mut rng)?;
    fs::create_dir_all(out).with_context(|| format!("cannot create {}", out.display()))?;
    write_records(&out.join("data.csv"), &Dataset::from_table(records))?;
    microclust::io::write_truth(&out.join("truth.csv"), &truth)?;
    eprintln!("wrote {} records in {} clusters to {}", truth.n(), truth.k(), out.display());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn fit(
    data: &Path,
    config: Option<&Path>,
    model: Option<ModelKind>,
    seed: Option<u64>,
    chains: usize,
    overrides: [Option<usize>; 4],
    out: &Path,
) -> CliResult {
    if chains == 0 {
        return Err(Failure::Usage(anyhow!("--chains must be at least 1")));
    }
    let mut rc = match config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(m) = model {
        rc.model = m;
    }
    if let Some(s) = seed {
        rc.seed = s;
    }
    let [iterations, burn_in, thin, moves] = overrides;
    rc.iterations = iterations.unwrap_or(rc.iterations);
    rc.burn_in = burn_in.unwrap_or(rc.burn_in);
    rc.thin = thin.unwrap_or(rc.thin);
    rc.moves_per_iter = moves.unwrap_or(rc.moves_per_iter);
    let chain = rc.chain_config()?;

    let dataset = load_records(data)?;
    let records = match rc.category_weights {
        CategoryWeights::Empirical => dataset.records,
        CategoryWeights::Uniform => dataset.records.with_uniform_theta(),
    };
    let traces = run_chains(&chain, &records, chains)?;
    fs::create_dir_all(out).with_context(|| format!("cannot create {}", out.display()))?;
    for (c, trace) in traces.iter().enumerate() {
        let name = if chains == 1 {
            "trace.tsv".to_owned()
        } else {
            format!("trace-{c}.tsv")
        };
        write_trace_file(&out.join(&name), trace)?;
        let k = trace.series(|s| s.k as f64);
        let mean_k = k.iter().sum::<f64>() / k.len().max(1) as f64;
        eprintln!("chain {c}: {} samples, mean K {mean_k:.2} -> {}", trace.len(), out.join(name).display());
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn prior_sample(
    model: ModelKind,
    n: usize,
    draws: usize,
    method: Method,
    rp: Option<(f64, f64)>,
    alpha: f64,
    theta: f64,
    sigma: Option<f64>,
    seed: u64,
    out: &Option<PathBuf>,
) -> CliResult {
    if n == 0 || draws == 0 {
        return Err(Failure::Usage(anyhow!("--n and --draws must be positive")));
    }
    let hyper = EscHyper {
        alpha,
        ..EscHyper::default()
    };
    let esc_prior = match (model, rp) {
        (ModelKind::EscNb, Some((r, p))) => Some(MuPrior::Fixed(SizeDistribution::NegBin(
            microclust::TruncNegBin::new(r, p).map_err(|e| Failure::Usage(e.into()))?,
        ))),
        (ModelKind::EscNb, None) => Some(MuPrior::EscNb(hyper)),
        (ModelKind::EscD, Some((r, p))) => Some(MuPrior::EscDFixed { r, p, alpha }),
        (ModelKind::EscD, None) => Some(MuPrior::EscD(hyper)),
        (ModelKind::Dp | ModelKind::Py, _) => None,
    };
    let crp = match model {
        ModelKind::Dp | ModelKind::Py => {
            if method == Method::Importance {
                return Err(Failure::Usage(anyhow!(
                    "DP and PY draws are exact; --method importance applies to ESC models only"
                )));
            }
            let default_sigma = if model == ModelKind::Py { 0.5 } else { 0.0 };
            let sigma = sigma.unwrap_or(default_sigma);
            if model == ModelKind::Dp && sigma != 0.0 {
                return Err(Failure::Usage(anyhow!("the DP has no discount")));
            }
            Some(CrpParams::new(theta, sigma).map_err(|e| Failure::Usage(e.into()))?)
        }
        _ => None,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(draws);
    for d in 0..draws {
        let (partition, weight) = match (&esc_prior, &crp) {
            (Some(prior), _) if method == Method::Importance => {
                let w = importance_sample(prior, n, &mut rng)?;
                (w.partition, w.weight)
            }
            (Some(prior), _) => (rejection_sample(prior, n, &mut rng)?, 1.0),
            (None, Some(params)) => (crp_sample(n, params, &mut rng)?, 1.0),
            (None, None) => unreachable!(),
        };
        let z: Vec<String> = partition.allocations_one_based().iter().map(|z| z.to_string()).collect();
        rows.push(vec![(d + 1).to_string(), fmt(weight), partition.k().to_string(), z.join(" ")]);
    }
    write_table(output(out)?, &["draw", "weight", "K", "allocations"], &rows)?;
    Ok(())
}

fn asymptotics(r: f64, p: f64, ns: &[usize], reps: usize, smax: usize, seed: u64, out: &Option<PathBuf>) -> CliResult {
    let nb = microclust::TruncNegBin::new(r, p).map_err(|e| Failure::Usage(e.into()))?;
    if ns.is_empty() || ns.contains(&0) || reps == 0 || smax == 0 {
        return Err(Failure::Usage(anyhow!("need positive --n values, --reps and --smax")));
    }
    let mu = SizeDistribution::NegBin(nb);
    let mean = mu.mean().expect("negative binomial has a mean");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut header: Vec<String> = ["n", "reps", "K/n", "max/n", "tv_size"].map(String::from).to_vec();
    header.extend((1..=smax).map(|s| format!("M{s}/n")));
    let mut rows = Vec::new();
    for &n in ns {
        let e = asymptotic_estimates(&mu, n, reps, smax, &mut rng)?;
        let mut row = vec![
            n.to_string(),
            reps.to_string(),
            fmt(e.k_over_n),
            fmt(e.max_over_n),
            fmt(tv_to_mu(&e.size_histogram_rb, &mu)),
        ];
        row.extend(e.occupancy_over_n.iter().map(|&x| fmt(x)));
        rows.push(row);
    }
    let mut limit = vec!["limit".to_owned(), "-".to_owned(), fmt(1.0 / mean), "0".to_owned(), "0".to_owned()];
    limit.extend((1..=smax).map(|s| fmt(mu.pmf(s) / mean)));
    rows.push(limit);
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    write_table(output(out)?, &header, &rows)?;
    Ok(())
}

fn load_trace(path: &Path) -> anyhow::Result<Trace> {
    read_trace_file(path).with_context(|| format!("reading trace {}", path.display()))
}

fn evaluate(trace: &Path, truth: &Path, boxplot: &Option<PathBuf>, out: &Option<PathBuf>) -> CliResult {
    let trace = load_trace(trace)?;
    let first = trace.samples.first().ok_or(Error::EmptyDraws)?;
    let truth = load_truth(truth, first.allocations.len())?;
    let rates = posterior_rates(&trace, &truth)?;
    let summary = posterior_summaries(&trace)?;
    let row = |name: &str, s: microclust::mcmc::diagnostics::ChainSummary| {
        vec![name.to_owned(), fmt(s.mean), fmt(s.mcse), fmt(s.ess)]
    };
    let rows = vec![row("fnr", rates.fnr), row("fdr", rates.fdr), row("K", summary.k)];
    write_table(output(out)?, &["statistic", "mean", "mcse", "ess"], &rows)?;
    if let Some(path) = boxplot {
        let file = fs::File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
        write_boxplot_jsonl(io::BufWriter::new(file), &summary)?;
    }
    Ok(())
}

fn diagnose(trace: &Path, out: &Option<PathBuf>) -> CliResult {
    let trace = load_trace(trace)?;
    let mut columns: Vec<(String, Vec<f64>)> = vec![("K".into(), trace.series(|s| s.k as f64))];
    let optional: [(&str, fn(&microclust::mcmc::TraceSample) -> Option<f64>); 4] = [
        ("r", |s| s.r),
        ("p", |s| s.p),
        ("theta", |s| s.theta),
        ("sigma", |s| s.sigma),
    ];
    for (name, get) in optional {
        let xs: Option<Vec<f64>> = trace.samples.iter().map(get).collect();
        if let Some(xs) = xs.filter(|xs| !xs.is_empty()) {
            columns.push((name.into(), xs));
        }
    }
    let fields = trace.samples.first().map_or(0, |s| s.beta.len());
    for f in 0..fields {
        columns.push((format!("beta{}", f + 1), trace.series(|s| s.beta[f])));
    }
    let mut rows = Vec::new();
    for (name, xs) in columns {
        let d = diagnostics(&xs)?;
        rows.push(vec![name, fmt(d.mean), fmt(d.mcse), fmt(d.ess)]);
    }
    write_table(output(out)?, &["statistic", "mean", "mcse", "ess"], &rows)?;
    Ok(())
}

fn run(cli: Cli) -> CliResult {
    match cli.command {
        Command::Simulate {
            scenario,
            beta,
            fields,
            categories,
            seed,
            out,
        } => simulate(scenario, beta, fields, categories, seed, &out),
        Command::Fit {
            data,
            config,
            model,
            seed,
            chains,
            iterations,
            burn_in,
            thin,
            moves_per_iter,
            out,
        } => fit(
            &data,
            config.as_deref(),
            model,
            seed,
            chains,
            [iterations, burn_in, thin, moves_per_iter],
            &out,
        ),
        Command::PriorSample {
            model,
            n,
            draws,
            method,
            r,
            p,
            alpha,
            theta,
            sigma,
            seed,
            out,
        } => prior_sample(model, n, draws, method, r.zip(p), alpha, theta, sigma, seed, &out),
        Command::Asymptotics {
            r,
            p,
            n,
            reps,
            smax,
            seed,
            out,
        } => asymptotics(r, p, &n, reps, smax, seed, &out),
        Command::Evaluate {
            trace, truth, boxplot, out, ..
        } => evaluate(&trace, &truth, &boxplot, &out),
        Command::Diagnose { trace, out, .. } => diagnose(&trace, &out),
    }
}

fn main() -> ExitCode {
    // clap exits with status 2 on usage errors and 0 for --help
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
