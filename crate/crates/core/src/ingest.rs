//! Loading paired observations from CSV with the usual rainfall-style
//! filters.
//!
//! Filters run in this order: rows holding a missing-value token in either
//! column are dropped, then rows outside the date filter, then rows where
//! either value is below the dry threshold. Finally a row is kept only if
//! both values (or either, with `either`) lie strictly above their
//! marginal empirical `p`-quantile, computed on the rows that survived the
//! dry filter. The empirical `p`-quantile of `m` values is the order
//! statistic of rank `ceil(m * p)`.

use std::io::Read;
use std::path::{Path, PathBuf};

use chrono::{Datelike, NaiveDate};

use crate::error::{Error, Result};
use crate::pseudo::BivariateSample;

/// Fewest rows an ingested sample may keep.
pub const MIN_ROWS: usize = 50;

pub const DATE_FORMAT: &str = "%Y-%m-%d";

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DateFilter {
    /// Calendar months `1..=12` to keep; empty keeps all.
    pub months: Vec<u32>,
    pub from: Option<NaiveDate>,
    pub to: Option<NaiveDate>,
}

impl DateFilter {
    pub fn keeps(&self, d: NaiveDate) -> bool {
        (self.months.is_empty() || self.months.contains(&d.month()))
            && self.from.is_none_or(|f| d >= f)
            && self.to.is_none_or(|t| d <= t)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IngestionSpec {
    pub path: PathBuf,
    pub x_column: String,
    pub y_column: String,
    pub date_column: Option<String>,
    pub na_tokens: Vec<String>,
    pub dry_threshold: f64,
    pub quantile_filter: f64,
    pub date_filter: Option<DateFilter>,
    /// Keep rows where either value exceeds its quantile instead of both.
    pub either: bool,
}

impl IngestionSpec {
    pub fn new(path: impl Into<PathBuf>, x_column: &str, y_column: &str) -> Self {
        Self {
            path: path.into(),
            x_column: x_column.to_owned(),
            y_column: y_column.to_owned(),
            date_column: None,
            na_tokens: default_na_tokens(),
            dry_threshold: 1.0,
            quantile_filter: 0.90,
            date_filter: None,
            either: false,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.quantile_filter >= 0.0 && self.quantile_filter < 1.0) {
            return Err(Error::Config(format!(
                "quantile filter {} not in [0, 1)",
                self.quantile_filter
            )));
        }
        if !(self.dry_threshold >= 0.0) {
            return Err(Error::Config(format!("dry threshold {} is negative", self.dry_threshold)));
        }
        if self.date_filter.is_some() && self.date_column.is_none() {
            return Err(Error::Config("a date filter needs a date column".into()));
        }
        Ok(())
    }
}

pub fn default_na_tokens() -> Vec<String> {
    ["", "NA", "N/A", "NaN", "nan", "-", "null"].map(String::from).to_vec()
}

/// Row counts at each filtering stage.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct IngestCounts {
    pub read: usize,
    pub missing: usize,
    pub out_of_dates: usize,
    pub dry: usize,
    pub below_quantile: usize,
    pub retained: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Filtered {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub dates: Option<Vec<String>>,
    pub counts: IngestCounts,
}

fn column_index(headers: &csv::StringRecord, name: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h.trim() == name)
        .ok_or_else(|| Error::Config(format!("column '{name}' not found in header")))
}

fn parse_value(raw: &str, row: usize, column: &str) -> Result<f64> {
    match raw.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(Error::Parse {
            row,
            message: format!("column {column}: '{raw}' is not a finite number"),
        }),
    }
}

/// Empirical `p`-quantile: the order statistic of rank `ceil(m * p)`.
pub fn empirical_quantile(values: &[f64], p: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let rank = ((v.len() as f64 * p).ceil() as usize).clamp(1, v.len());
    v[rank - 1]
}

/// Apply all filters to CSV content. No minimum size is enforced here.
pub fn filter_records<R: Read>(spec: &IngestionSpec, input: R) -> Result<Filtered> {
    spec.validate()?;
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(input);
    let headers = rdr.headers()?.clone();
    let xi = column_index(&headers, &spec.x_column)?;
    let yi = column_index(&headers, &spec.y_column)?;
    let di = spec.date_column.as_deref().map(|d| column_index(&headers, d)).transpose()?;
    let is_na = |s: &str| spec.na_tokens.iter().any(|t| t == s);

    let mut counts = IngestCounts::default();
    let mut rows: Vec<(f64, f64, Option<String>)> = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        // Row numbers count the header as row 1.
        let row = i + 2;
        let rec = rec?;
        counts.read += 1;
        let rx = rec.get(xi).unwrap_or("").trim();
        let ry = rec.get(yi).unwrap_or("").trim();
        if is_na(rx) || is_na(ry) {
            counts.missing += 1;
            continue;
        }
        let x = parse_value(rx, row, &spec.x_column)?;
        let y = parse_value(ry, row, &spec.y_column)?;
        let date = match di {
            Some(di) => {
                let raw = rec.get(di).unwrap_or("").trim();
                let d = NaiveDate::parse_from_str(raw, DATE_FORMAT).map_err(|_| Error::Parse {
                    row,
                    message: format!("date '{raw}' does not match {DATE_FORMAT}"),
                })?;
                if let Some(f) = &spec.date_filter {
                    if !f.keeps(d) {
                        counts.out_of_dates += 1;
                        continue;
                    }
                }
                Some(raw.to_owned())
            }
            None => None,
        };
        if x < spec.dry_threshold || y < spec.dry_threshold {
            counts.dry += 1;
            continue;
        }
        rows.push((x, y, date));
    }

    if spec.quantile_filter > 0.0 && !rows.is_empty() {
        let xs: Vec<f64> = rows.iter().map(|r| r.0).collect();
        let ys: Vec<f64> = rows.iter().map(|r| r.1).collect();
        let qx = empirical_quantile(&xs, spec.quantile_filter);
        let qy = empirical_quantile(&ys, spec.quantile_filter);
        let before = rows.len();
        rows.retain(|&(x, y, _)| {
            if spec.either {
                x > qx || y > qy
            } else {
                x > qx && y > qy
            }
        });
        counts.below_quantile = before - rows.len();
    }
    counts.retained = rows.len();

    let dates = di.map(|_| rows.iter().map(|r| r.2.clone().unwrap_or_default()).collect());
    let (x, y) = rows.into_iter().map(|(x, y, _)| (x, y)).unzip();
    Ok(Filtered { x, y, dates, counts })
}

/// Read, filter and validate a paired sample.
pub fn ingest(spec: &IngestionSpec) -> Result<(BivariateSample, IngestCounts)> {
    let file = std::fs::File::open(&spec.path).map_err(|e| Error::io(&spec.path, e))?;
    let filtered = filter_records(spec, std::io::BufReader::new(file))?;
    sample_from(filtered, &spec.path)
}

fn sample_from(filtered: Filtered, path: &Path) -> Result<(BivariateSample, IngestCounts)> {
    let counts = filtered.counts;
    if counts.retained < MIN_ROWS {
        return Err(Error::InsufficientData(format!(
            "{}: {} rows retained after filtering, need at least {MIN_ROWS} ({counts:?})",
            path.display(),
            counts.retained
        )));
    }
    let mut sample = BivariateSample::new(filtered.x, filtered.y)?;
    if let Some(d) = filtered.dates {
        sample = sample.with_labels(d)?;
    }
    Ok((sample, counts))
}
