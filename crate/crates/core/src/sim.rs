//! Seeded Monte Carlo studies over copula models.
//!
//! A study draws `N` samples of size `n` from one copula and evaluates every
//! `(estimator, margin, q, k)` cell on each. Replicate `r` uses the stream
//! `(master_seed, r)`. Replicates are grouped into fixed blocks of
//! [`BLOCK`]; each block is accumulated in index order and the blocks are
//! merged in index order, so the aggregates do not depend on how many
//! threads ran the blocks.

use std::cmp::Ordering;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bias::{estimate_second_order, reduced_bias_eta, KStarRule, SecondOrderParams};
use crate::copula::CopulaModel;
use crate::error::{Error, Result};
use crate::estimators::{tail_functional_from_logs, EstimatorSpec, Margin};
use crate::pseudo::{BivariateSample, PseudoSample, TiePolicy};
use crate::rng::stream_rng;

/// Replicates per aggregation block.
pub const BLOCK: usize = 8;

/// Cells whose failure share exceeds this are flagged.
pub const FAILURE_FLAG_SHARE: f64 = 0.10;

const CSV_HEADER: [&str; 14] = [
    "estimator",
    "margin",
    "q",
    "a",
    "b",
    "k",
    "k_over_n",
    "kstar",
    "mean",
    "bias",
    "variance",
    "mse",
    "n_ok",
    "n_fail",
];

/// Thresholds either as absolute `k`, as fractions `k/n` (floored), or as a
/// range of every `step`-th `k` up to `floor(max_fraction * n)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum KGrid {
    Absolute(Vec<usize>),
    Fractions(Vec<f64>),
    Range {
        max_fraction: f64,
        #[serde(default = "one")]
        step: usize,
    },
}

fn one() -> usize {
    1
}

impl Default for KGrid {
    fn default() -> Self {
        KGrid::Range {
            max_fraction: 0.3,
            step: 1,
        }
    }
}

impl KGrid {
    /// Sorted, de-duplicated absolute thresholds for sample size `n`.
    pub fn resolve(&self, n: usize) -> Result<Vec<usize>> {
        let mut ks: Vec<usize> = match self {
            KGrid::Absolute(ks) => ks.clone(),
            KGrid::Fractions(fs) => {
                let mut out = Vec::with_capacity(fs.len());
                for &f in fs {
                    if !(f > 0.0 && f < 1.0) {
                        return Err(Error::Config(format!("k fraction {f} not in (0, 1)")));
                    }
                    out.push((n as f64 * f).floor() as usize);
                }
                out
            }
            KGrid::Range { max_fraction, step } => {
                if !(*max_fraction > 0.0 && *max_fraction < 1.0) || *step == 0 {
                    return Err(Error::Config(format!(
                        "k range needs max_fraction in (0, 1) and step >= 1, got ({max_fraction}, {step})"
                    )));
                }
                let top = (n as f64 * max_fraction).floor() as usize;
                (1..=top).filter(|k| (k - 1) % step == 0).collect()
            }
        };
        ks.sort_unstable();
        ks.dedup();
        if let Some(&bad) = ks.iter().find(|&&k| k == 0 || k >= n) {
            return Err(Error::Config(format!("k = {bad} outside 1..={}", n - 1)));
        }
        Ok(ks)
    }
}

/// Where the reduced-bias cells get `(τ, β)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SecondOrderMode {
    /// Estimated on each replicate.
    #[default]
    PerReplicate,
    /// Known `(τ̃, β̄)` of the model.
    Oracle { tau: f64, beta: f64 },
    /// Fixed values used verbatim.
    UserSupplied { tau: f64, beta: f64 },
}

/// Map from `q` to `(a, b)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QMap {
    #[default]
    Conjugate,
    MeanOfOrder,
}

impl QMap {
    pub fn spec(self, q: f64, margin: Margin) -> Result<EstimatorSpec> {
        match self {
            QMap::Conjugate => EstimatorSpec::conjugate(q, margin),
            QMap::MeanOfOrder => EstimatorSpec::mean_of_order(q, margin),
        }
    }
}

fn default_n() -> usize {
    500
}

fn default_replicates() -> usize {
    1000
}

fn default_q_grid() -> Vec<f64> {
    (1..=19).map(|i| i as f64 / 10.0).collect()
}

fn default_margins() -> Vec<Margin> {
    vec![Margin::ParetoT, Margin::FrechetUnshifted, Margin::FrechetShifted]
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    pub model: CopulaModel,
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(rename = "N", default = "default_replicates")]
    pub replicates: usize,
    #[serde(default = "default_q_grid")]
    pub q_grid: Vec<f64>,
    #[serde(default)]
    pub k_grid: KGrid,
    #[serde(default = "default_margins")]
    pub margins: Vec<Margin>,
    #[serde(default)]
    pub kstar_rule: KStarRule,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default)]
    pub second_order: SecondOrderMode,
    /// Threshold for per-replicate second-order estimation; default
    /// `floor(n^0.999)`.
    #[serde(default)]
    pub k0: Option<usize>,
    /// Add reduced-bias cells (shifted Fréchet margin only).
    #[serde(default = "yes")]
    pub reduced_bias: bool,
    #[serde(default)]
    pub parametrization: QMap,
}

impl StudyConfig {
    /// Config with the defaults of the reference study for `model`.
    pub fn new(model: CopulaModel) -> Self {
        Self {
            model,
            n: default_n(),
            replicates: default_replicates(),
            q_grid: default_q_grid(),
            k_grid: KGrid::default(),
            margins: default_margins(),
            kstar_rule: KStarRule::default(),
            master_seed: 0,
            second_order: SecondOrderMode::default(),
            k0: None,
            reduced_bias: true,
            parametrization: QMap::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(Error::Config("N must be at least 1".into()));
        }
        if self.n < 2 {
            return Err(Error::Config(format!("n = {} is below 2", self.n)));
        }
        if let Some(&q) = self.q_grid.iter().find(|q| !(**q > 0.0 && q.is_finite())) {
            return Err(Error::Config(format!("q = {q} must be positive")));
        }
        self.k_grid.resolve(self.n)?;
        match self.second_order {
            SecondOrderMode::Oracle { tau, beta } | SecondOrderMode::UserSupplied { tau, beta } => {
                SecondOrderParams::user_supplied(tau, beta)?;
            }
            SecondOrderMode::PerReplicate => {}
        }
        if let Some(k0) = self.k0 {
            if k0 < 3 || k0 >= self.n {
                return Err(Error::Config(format!("k0 = {k0} outside 3..={}", self.n - 1)));
            }
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form of the config.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }

    /// Sample of replicate `r`.
    pub fn replicate_sample(&self, r: u64) -> Result<BivariateSample> {
        self.model.sample_with(self.n, &mut stream_rng(self.master_seed, r))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    Raw,
    Reduced,
}

impl EstimatorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EstimatorKind::Raw => "raw",
            EstimatorKind::Reduced => "reduced",
        }
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "raw" => Ok(EstimatorKind::Raw),
            "reduced" => Ok(EstimatorKind::Reduced),
            other => Err(Error::Config(format!("unknown estimator '{other}'"))),
        }
    }
}

/// One evaluated cell of a study.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub estimator: EstimatorKind,
    pub margin: Margin,
    pub q: f64,
    pub a: f64,
    pub b: f64,
    pub k: usize,
    pub kstar: Option<usize>,
}

impl Cell {
    fn sort_key(&self, other: &Self) -> Ordering {
        self.estimator
            .cmp(&other.estimator)
            .then(self.margin.as_str().cmp(other.margin.as_str()))
            .then(self.q.total_cmp(&other.q))
            .then(self.a.total_cmp(&other.a))
            .then(self.b.total_cmp(&other.b))
            .then(self.k.cmp(&other.k))
    }
}

/// Single-pass mean and sum of squared deviations, mergeable.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Accumulator {
    count: u64,
    mean: f64,
    m2: f64,
}

impl Accumulator {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let d = x - self.mean;
        self.mean += d / self.count as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn merge(&mut self, other: &Self) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = *other;
            return;
        }
        let total = self.count + other.count;
        let d = other.mean - self.mean;
        let w = other.count as f64 / total as f64;
        self.mean += d * w;
        self.m2 += other.m2 + d * d * self.count as f64 * w;
        self.count = total;
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    /// `NaN` when empty.
    pub fn mean(&self) -> f64 {
        if self.count == 0 {
            f64::NAN
        } else {
            self.mean
        }
    }

    /// Population variance (divisor `count`), so that
    /// `mse = bias² + variance`.
    pub fn variance(&self) -> f64 {
        if self.count == 0 {
            f64::NAN
        } else {
            self.m2 / self.count as f64
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct CellTally {
    acc: Accumulator,
    failures: u64,
}

impl CellTally {
    fn record(&mut self, value: Option<f64>) {
        match value {
            Some(v) => self.acc.push(v),
            None => self.failures += 1,
        }
    }

    fn merge(&mut self, other: &Self) {
        self.acc.merge(&other.acc);
        self.failures += other.failures;
    }
}

/// Aggregated result for one cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    #[serde(flatten)]
    pub cell: Cell,
    pub k_over_n: f64,
    pub mean: f64,
    /// `mean - η`; `NaN` when the model's `η` is unknown.
    pub bias: f64,
    pub variance: f64,
    pub mse: f64,
    pub n_ok: u64,
    pub n_fail: u64,
    /// More than 10% of replicates failed.
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: String,
    pub master_seed: u64,
    pub config: StudyConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationReport {
    pub provenance: Provenance,
    /// Sorted by estimator, margin, q, a, b, k.
    pub rows: Vec<CellSummary>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    JsonLines,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "jsonl" | "jsonlines" => Ok(ReportFormat::JsonLines),
            other => Err(Error::Config(format!("unknown report format '{other}'"))),
        }
    }
}

/// A validated config with its cell list laid out.
#[derive(Debug, Clone)]
pub struct Study {
    config: StudyConfig,
    cells: Vec<Cell>,
}

impl Study {
    pub fn new(config: StudyConfig) -> Result<Self> {
        config.validate()?;
        let ks = config.k_grid.resolve(config.n)?;
        let mut cells = Vec::new();
        let mut push = |kind: EstimatorKind, spec: EstimatorSpec, q: f64| {
            for &k in &ks {
                let kstar = (kind == EstimatorKind::Reduced).then(|| config.kstar_rule.resolve(config.n, k));
                cells.push(Cell {
                    estimator: kind,
                    margin: spec.margin(),
                    q,
                    a: spec.a(),
                    b: spec.b(),
                    k,
                    kstar,
                });
            }
        };
        for &margin in &config.margins {
            for &q in &config.q_grid {
                push(EstimatorKind::Raw, config.parametrization.spec(q, margin)?, q);
            }
        }
        if config.reduced_bias {
            for &q in &config.q_grid {
                push(
                    EstimatorKind::Reduced,
                    config.parametrization.spec(q, Margin::FrechetShifted)?,
                    q,
                );
            }
        }
        cells.sort_by(Cell::sort_key);
        cells.dedup_by(|a, b| a.sort_key(b) == Ordering::Equal);
        Ok(Self { config, cells })
    }

    pub fn config(&self) -> &StudyConfig {
        &self.config
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    fn second_order(&self, pseudo: &PseudoSample) -> Result<SecondOrderParams> {
        match self.config.second_order {
            SecondOrderMode::PerReplicate => estimate_second_order(pseudo, self.config.k0),
            SecondOrderMode::Oracle { tau, beta } => SecondOrderParams::oracle(tau, beta),
            SecondOrderMode::UserSupplied { tau, beta } => SecondOrderParams::user_supplied(tau, beta),
        }
    }

    /// Value of every cell on the pseudo-observations of one sample, in
    /// [`Study::cells`] order; `None` marks a failed evaluation.
    pub fn evaluate(&self, pseudo: &PseudoSample) -> Vec<Option<f64>> {
        let logs = |m: Margin| -> Vec<f64> { m.order_statistics(pseudo).iter().map(|z| z.ln()).collect() };
        let margin_logs = [
            logs(Margin::FrechetShifted),
            logs(Margin::FrechetUnshifted),
            logs(Margin::ParetoT),
        ];
        let so = if self.config.reduced_bias {
            Some(self.second_order(pseudo))
        } else {
            None
        };
        self.cells
            .iter()
            .map(|c| match c.estimator {
                EstimatorKind::Raw => {
                    let idx = match c.margin {
                        Margin::FrechetShifted => 0,
                        Margin::FrechetUnshifted => 1,
                        Margin::ParetoT => 2,
                    };
                    tail_functional_from_logs(&margin_logs[idx], c.k, c.a, c.b).ok()
                }
                EstimatorKind::Reduced => match &so {
                    Some(Ok(so)) => {
                        let kstar = c.kstar.expect("reduced cells carry k*");
                        reduced_bias_eta(pseudo, c.k, kstar, c.a, so, 0.95).ok().map(|e| e.eta)
                    }
                    _ => None,
                },
            })
            .collect()
    }

    /// Cell values for replicate `r`.
    pub fn replicate(&self, r: u64) -> Vec<Option<f64>> {
        let pseudo = self
            .config
            .replicate_sample(r)
            .and_then(|s| PseudoSample::new(&s, TiePolicy::FirstOccurrence));
        match pseudo {
            Ok(p) => self.evaluate(&p),
            Err(_) => vec![None; self.cells.len()],
        }
    }

    fn run_block(&self, block: usize) -> Vec<CellTally> {
        let mut tallies = vec![CellTally::default(); self.cells.len()];
        let start = block * BLOCK;
        let end = (start + BLOCK).min(self.config.replicates);
        for r in start..end {
            for (t, v) in tallies.iter_mut().zip(self.replicate(r as u64)) {
                t.record(v);
            }
        }
        tallies
    }

    /// Run on the current rayon pool.
    pub fn run(&self) -> SimulationReport {
        let blocks = self.config.replicates.div_ceil(BLOCK);
        let partial: Vec<Vec<CellTally>> = (0..blocks).into_par_iter().map(|b| self.run_block(b)).collect();
        let mut totals = vec![CellTally::default(); self.cells.len()];
        for block in &partial {
            for (t, p) in totals.iter_mut().zip(block) {
                t.merge(p);
            }
        }
        self.summarize(&totals)
    }

    fn summarize(&self, totals: &[CellTally]) -> SimulationReport {
        let truth = self.config.model.true_eta().unwrap_or(f64::NAN);
        let n = self.config.n as f64;
        let rows = self
            .cells
            .iter()
            .zip(totals)
            .map(|(cell, t)| {
                let mean = t.acc.mean();
                let variance = t.acc.variance();
                let bias = mean - truth;
                let n_ok = t.acc.count();
                let total = n_ok + t.failures;
                CellSummary {
                    cell: *cell,
                    k_over_n: cell.k as f64 / n,
                    mean,
                    bias,
                    variance,
                    mse: bias * bias + variance,
                    n_ok,
                    n_fail: t.failures,
                    flagged: total > 0 && t.failures as f64 > FAILURE_FLAG_SHARE * total as f64,
                }
            })
            .collect();
        SimulationReport {
            provenance: Provenance {
                config_hash: self.config.hash(),
                master_seed: self.config.master_seed,
                config: self.config.clone(),
            },
            rows,
        }
    }
}

/// Run a study on the global rayon pool.
pub fn run_study(config: StudyConfig) -> Result<SimulationReport> {
    Ok(Study::new(config)?.run())
}

/// Run a study on a dedicated pool of `threads` workers.
pub fn run_study_with_threads(config: StudyConfig, threads: usize) -> Result<SimulationReport> {
    let study = Study::new(config)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    Ok(pool.install(|| study.run()))
}

fn opt_field(v: Option<usize>) -> String {
    v.map(|k| k.to_string()).unwrap_or_default()
}

impl SimulationReport {
    /// Write the report as CSV or JSON lines. The JSON form starts with a
    /// provenance line.
    pub fn emit<W: Write>(&self, format: ReportFormat, out: W) -> Result<()> {
        match format {
            ReportFormat::Csv => self.emit_csv(out),
            ReportFormat::JsonLines => self.emit_jsonl(out),
        }
    }

    fn emit_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(CSV_HEADER)?;
        for r in &self.rows {
            let c = &r.cell;
            w.write_record([
                c.estimator.to_string(),
                c.margin.to_string(),
                c.q.to_string(),
                c.a.to_string(),
                c.b.to_string(),
                c.k.to_string(),
                r.k_over_n.to_string(),
                opt_field(c.kstar),
                r.mean.to_string(),
                r.bias.to_string(),
                r.variance.to_string(),
                r.mse.to_string(),
                r.n_ok.to_string(),
                r.n_fail.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<report>", e))?;
        Ok(())
    }

    fn emit_jsonl<W: Write>(&self, mut out: W) -> Result<()> {
        let mut buf = serde_json::to_string(&serde_json::json!({ "provenance": &self.provenance }))
            .expect("provenance serializes");
        buf.push('\n');
        for r in &self.rows {
            buf.push_str(&serde_json::to_string(r).expect("report rows serialize"));
            buf.push('\n');
        }
        out.write_all(buf.as_bytes()).map_err(|e| Error::io("<report>", e))
    }

    /// Write to `path`, choosing CSV unless the extension is `.jsonl`.
    pub fn write_to(&self, path: &Path) -> Result<()> {
        let format = match path.extension().and_then(|e| e.to_str()) {
            Some("jsonl") => ReportFormat::JsonLines,
            _ => ReportFormat::Csv,
        };
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut writer = std::io::BufWriter::new(file);
        self.emit(format, &mut writer)?;
        writer.flush().map_err(|e| Error::io(path, e))
    }
}

fn parse_field<T: FromStr>(record: &csv::StringRecord, idx: usize, row: usize) -> Result<T> {
    let raw = record.get(idx).unwrap_or("");
    raw.parse().map_err(|_| Error::Parse {
        row,
        message: format!("column {} = '{raw}'", CSV_HEADER[idx]),
    })
}

/// Parse rows written by [`SimulationReport::emit`] in CSV form.
pub fn parse_report_csv<R: Read>(input: R) -> Result<Vec<CellSummary>> {
    let mut rdr = csv::Reader::from_reader(input);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    if header != CSV_HEADER {
        return Err(Error::Parse {
            row: 1,
            message: format!("unexpected header {header:?}"),
        });
    }
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = i + 2;
        let kstar = match rec.get(7).unwrap_or("") {
            "" => None,
            _ => Some(parse_field(&rec, 7, row)?),
        };
        let n_ok: u64 = parse_field(&rec, 12, row)?;
        let n_fail: u64 = parse_field(&rec, 13, row)?;
        let total = n_ok + n_fail;
        rows.push(CellSummary {
            cell: Cell {
                estimator: parse_field(&rec, 0, row)?,
                margin: parse_field(&rec, 1, row)?,
                q: parse_field(&rec, 2, row)?,
                a: parse_field(&rec, 3, row)?,
                b: parse_field(&rec, 4, row)?,
                k: parse_field(&rec, 5, row)?,
                kstar,
            },
            k_over_n: parse_field(&rec, 6, row)?,
            mean: parse_field(&rec, 8, row)?,
            bias: parse_field(&rec, 9, row)?,
            variance: parse_field(&rec, 10, row)?,
            mse: parse_field(&rec, 11, row)?,
            n_ok,
            n_fail,
            flagged: total > 0 && n_fail as f64 > FAILURE_FLAG_SHARE * total as f64,
        });
    }
    Ok(rows)
}
