//! Files: categorical record CSVs, ground-truth side files, tab-separated
//! traces, summary tables and the flat TOML run configuration.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::esc::EscHyper;
use crate::evaluation::PosteriorSummary;
use crate::likelihood::{beta_prior_from_moments, RecordTable};
use crate::mcmc::{BetaMode, ChainConfig, InitialPartition, ModelKind, ModelSpec, Trace, TraceSample};
use crate::partition::Partition;

/// A loaded record file: column names, the distinct values of each column in
/// order of first appearance, and the encoded table (empirical `theta`).
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub columns: Vec<String>,
    pub dictionaries: Vec<Vec<String>>,
    pub records: RecordTable,
}

impl Dataset {
    /// Wraps generated codes, naming columns `f1..fL` and values `1..D`.
    pub fn from_table(records: RecordTable) -> Self {
        let columns = (1..=records.l()).map(|f| format!("f{f}")).collect();
        let dictionaries = records
            .cat_counts()
            .iter()
            .map(|&d| (1..=d).map(|v| v.to_string()).collect())
            .collect();
        Self {
            columns,
            dictionaries,
            records,
        }
    }
}

// row 0 stands for the file as a whole
fn data_err(path: &Path, row: usize, message: impl Into<String>) -> Error {
    let message = message.into();
    Error::Data {
        path: path.display().to_string(),
        row,
        message: if row == 0 { message } else { format!("row {row}: {message}") },
    }
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| data_err(path, 0, format!("cannot open file: {e}")))
}

/// Reads a comma-separated file with a header row. Rows are numbered from 1
/// after the header in error messages.
pub fn load_records(path: &Path) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .from_reader(open(path)?);
    let columns: Vec<String> = reader
        .headers()
        .map_err(|e| data_err(path, 0, format!("unreadable header: {e}")))?
        .iter()
        .map(str::to_owned)
        .collect();
    if columns.is_empty() || columns.iter().all(|c| c.trim().is_empty()) {
        return Err(data_err(path, 0, "header has no columns"));
    }
    let l = columns.len();
    let mut lookup: Vec<BTreeMap<String, u32>> = vec![BTreeMap::new(); l];
    let mut dictionaries: Vec<Vec<String>> = vec![Vec::new(); l];
    let mut codes = Vec::new();
    let mut n = 0;
    for (idx, row) in reader.records().enumerate() {
        let row_no = idx + 1;
        let row = row.map_err(|e| data_err(path, row_no, format!("unreadable row: {e}")))?;
        if row.len() != l {
            return Err(data_err(
                path,
                row_no,
                format!("ragged row: expected {l} fields, found {}", row.len()),
            ));
        }
        for (f, cell) in row.iter().enumerate() {
            let cell = cell.trim();
            if cell.is_empty() {
                return Err(data_err(path, row_no, format!("missing value in column '{}'", columns[f])));
            }
            let next = dictionaries[f].len() as u32;
            let code = *lookup[f].entry(cell.to_owned()).or_insert_with(|| {
                dictionaries[f].push(cell.to_owned());
                next
            });
            codes.push(code);
        }
        n += 1;
    }
    if n == 0 {
        return Err(data_err(path, 0, "file has no records"));
    }
    let cat_counts = dictionaries.iter().map(Vec::len).collect();
    Ok(Dataset {
        columns,
        dictionaries,
        records: RecordTable::new(n, cat_counts, codes)?,
    })
}

pub fn write_records(path: &Path, data: &Dataset) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(&data.columns)?;
    let t = &data.records;
    for i in 0..t.n() {
        w.write_record(
            t.row(i)
                .iter()
                .enumerate()
                .map(|(f, &c)| data.dictionaries[f][c as usize].as_str()),
        )?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a `record,entity` file (records numbered from 1, entities any
/// string) covering each of the `n` records exactly once.
pub fn load_truth(path: &Path, n: usize) -> Result<Partition> {
    let mut reader = csv::Reader::from_reader(open(path)?);
    let mut entity_of: Vec<Option<String>> = vec![None; n];
    for (idx, row) in reader.records().enumerate() {
        let row_no = idx + 1;
        let row = row.map_err(|e| data_err(path, row_no, format!("unreadable row: {e}")))?;
        if row.len() != 2 {
            return Err(data_err(path, row_no, format!("expected 2 fields, found {}", row.len())));
        }
        let record: usize = row[0]
            .trim()
            .parse()
            .map_err(|_| data_err(path, row_no, format!("bad record index '{}'", &row[0])))?;
        if record == 0 || record > n {
            return Err(data_err(path, row_no, format!("record {record} outside 1..={n}")));
        }
        let entity = row[1].trim();
        if entity.is_empty() {
            return Err(data_err(path, row_no, "missing entity"));
        }
        if entity_of[record - 1].replace(entity.to_owned()).is_some() {
            return Err(data_err(path, row_no, format!("record {record} listed twice")));
        }
    }
    let mut labels = BTreeMap::new();
    let mut z = Vec::with_capacity(n);
    for (i, e) in entity_of.into_iter().enumerate() {
        let e = e.ok_or_else(|| data_err(path, 0, format!("record {} has no entity", i + 1)))?;
        let next = labels.len();
        z.push(*labels.entry(e).or_insert(next));
    }
    Partition::from_allocations(&z)
}

pub fn write_truth(path: &Path, truth: &Partition) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["record", "entity"])?;
    for (i, z) in truth.allocations_one_based().iter().enumerate() {
        w.write_record([(i + 1).to_string(), z.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

const TRACE_HEADER: &str = "iteration\tK\tr\tp\ttheta\tsigma\tbeta\tallocations";

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(|| "-".to_owned(), |v| v.to_string())
}

fn fmt_list<T: ToString>(xs: &[T]) -> String {
    if xs.is_empty() {
        "-".to_owned()
    } else {
        xs.iter().map(T::to_string).collect::<Vec<_>>().join(",")
    }
}

/// One sample per line; `-` marks an absent value. Floats use the shortest
/// representation that parses back to the same bits; allocations are
/// written 1-based.
pub fn write_trace<W: Write>(mut w: W, trace: &Trace) -> Result<()> {
    writeln!(w, "{TRACE_HEADER}")?;
    for s in &trace.samples {
        let z: Vec<usize> = s.allocations.iter().map(|z| z + 1).collect();
        writeln!(
            w,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            s.iteration,
            s.k,
            fmt_opt(s.r),
            fmt_opt(s.p),
            fmt_opt(s.theta),
            fmt_opt(s.sigma),
            fmt_list(&s.beta),
            fmt_list(&z)
        )?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_trace_file(path: &Path, trace: &Trace) -> Result<()> {
    write_trace(BufWriter::new(File::create(path)?), trace)
}

fn parse_field<T: std::str::FromStr>(s: &str, what: &str, line: usize) -> Result<T> {
    s.parse().map_err(|_| Error::TraceFormat {
        line,
        message: format!("bad {what} '{s}'"),
    })
}

fn parse_opt(s: &str, what: &str, line: usize) -> Result<Option<f64>> {
    if s == "-" {
        Ok(None)
    } else {
        parse_field(s, what, line).map(Some)
    }
}

fn parse_list<T: std::str::FromStr>(s: &str, what: &str, line: usize) -> Result<Vec<T>> {
    if s == "-" {
        return Ok(Vec::new());
    }
    s.split(',').map(|x| parse_field(x, what, line)).collect()
}

pub fn read_trace<R: BufRead>(r: R) -> Result<Trace> {
    let mut lines = r.lines();
    let header = lines.next().transpose()?;
    if header.as_deref().map(str::trim_end) != Some(TRACE_HEADER) {
        return Err(Error::TraceFormat {
            line: 1,
            message: "missing or unexpected header".into(),
        });
    }
    let mut samples = Vec::new();
    for (idx, line) in lines.enumerate() {
        let line_no = idx + 2;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.trim_end().split('\t').collect();
        if cols.len() != 8 {
            return Err(Error::TraceFormat {
                line: line_no,
                message: format!("expected 8 columns, found {}", cols.len()),
            });
        }
        let z: Vec<usize> = parse_list(cols[7], "allocation", line_no)?;
        if z.contains(&0) {
            return Err(Error::TraceFormat {
                line: line_no,
                message: "allocations are numbered from 1".into(),
            });
        }
        samples.push(TraceSample {
            iteration: parse_field(cols[0], "iteration", line_no)?,
            k: parse_field(cols[1], "K", line_no)?,
            r: parse_opt(cols[2], "r", line_no)?,
            p: parse_opt(cols[3], "p", line_no)?,
            theta: parse_opt(cols[4], "theta", line_no)?,
            sigma: parse_opt(cols[5], "sigma", line_no)?,
            beta: parse_list(cols[6], "beta", line_no)?,
            allocations: z.into_iter().map(|z| z - 1).collect(),
        });
    }
    Ok(Trace { samples })
}

pub fn read_trace_file(path: &Path) -> Result<Trace> {
    read_trace(BufReader::new(File::open(path)?))
}

/// Writes a header and rows of already formatted cells as CSV.
pub fn write_table<W: Write>(w: W, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(w);
    w.write_record(header)?;
    for row in rows {
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct BoxLine {
    size: usize,
    q025: f64,
    q25: f64,
    q50: f64,
    q75: f64,
    q975: f64,
}

/// One JSON object per cluster size with the quantiles of its count.
pub fn write_boxplot_jsonl<W: Write>(mut w: W, summary: &PosteriorSummary) -> Result<()> {
    for (&size, q) in &summary.occupancy {
        let [q025, q25, q50, q75, q975] = q.0;
        let line = BoxLine {
            size,
            q025,
            q25,
            q50,
            q75,
            q975,
        };
        let json = serde_json::to_string(&line).map_err(|e| Error::Io(e.into()))?;
        writeln!(w, "{json}")?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany {
    One(f64),
    Many(Vec<f64>),
}

impl OneOrMany {
    fn into_vec(self) -> Vec<f64> {
        match self {
            Self::One(x) => vec![x],
            Self::Many(xs) => xs,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CategoryWeights {
    Empirical,
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitKind {
    Singletons,
    OneCluster,
}

/// Flat key-value run settings. Every key is optional; the defaults give a
/// complete ESC-D run.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub model: ModelKind,
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub moves_per_iter: usize,
    pub gibbs_every: usize,
    pub seed: u64,
    pub chaperone_bias: bool,
    pub init: InitKind,

    pub eta_r: f64,
    pub s_r: f64,
    pub u_p: f64,
    pub v_p: f64,
    pub alpha: f64,
    pub r: f64,
    pub p: f64,
    pub update_rp: bool,

    pub theta: f64,
    /// Defaults to 0.5 for PY and 0 otherwise.
    pub sigma: Option<f64>,
    pub theta_shape: f64,
    /// Defaults to `2/n`.
    pub theta_rate: Option<f64>,
    pub update_theta: bool,
    pub update_sigma: bool,

    pub beta_mode: BetaMode,
    pub beta: OneOrMany,
    pub beta_prior_mean: f64,
    pub beta_prior_sd: f64,
    pub category_weights: CategoryWeights,
}

impl Default for RunConfig {
    fn default() -> Self {
        let h = EscHyper::default();
        Self {
            model: ModelKind::EscD,
            iterations: 20_000,
            burn_in: 5_000,
            thin: 1,
            moves_per_iter: 1000,
            gibbs_every: 100,
            seed: 0,
            chaperone_bias: true,
            init: InitKind::Singletons,
            eta_r: h.eta_r,
            s_r: h.s_r,
            u_p: h.u_p,
            v_p: h.v_p,
            alpha: h.alpha,
            r: 1.0,
            p: 0.5,
            update_rp: true,
            theta: 1.0,
            sigma: None,
            theta_shape: 1.0,
            theta_rate: None,
            update_theta: true,
            update_sigma: false,
            beta_mode: BetaMode::Fixed,
            beta: OneOrMany::One(0.01),
            beta_prior_mean: 0.005,
            beta_prior_sd: 0.01,
            category_weights: CategoryWeights::Empirical,
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    /// Checked chain settings.
    pub fn chain_config(&self) -> Result<ChainConfig> {
        let mut model = ModelSpec::new(self.model);
        model.hyper = EscHyper {
            eta_r: self.eta_r,
            s_r: self.s_r,
            u_p: self.u_p,
            v_p: self.v_p,
            alpha: self.alpha,
        };
        model.r = self.r;
        model.p = self.p;
        model.update_rp = self.update_rp;
        model.theta = self.theta;
        if let Some(s) = self.sigma {
            model.sigma = s;
        }
        model.theta_shape = self.theta_shape;
        model.theta_rate = self.theta_rate;
        model.update_theta = self.update_theta;
        model.update_sigma = self.update_sigma;

        let mut c = ChainConfig::new(model);
        c.iterations = self.iterations;
        c.burn_in = self.burn_in;
        c.thin = self.thin;
        c.moves_per_iter = self.moves_per_iter;
        c.gibbs_every = self.gibbs_every;
        c.seed = self.seed;
        c.chaperone_bias = self.chaperone_bias;
        c.init = match self.init {
            InitKind::Singletons => InitialPartition::Singletons,
            InitKind::OneCluster => InitialPartition::OneCluster,
        };
        c.beta_mode = self.beta_mode;
        c.beta = self.beta.clone().into_vec();
        c.beta_prior = beta_prior_from_moments(self.beta_prior_mean, self.beta_prior_sd)
            .map_err(|e| Error::Config(format!("beta prior: {e}")))?;
        c.validate()?;
        Ok(c)
    }
}
