//! Estimate paths `k -> η̂(k)` with confidence intervals for an observed
//! sample.

use std::io::Write;

use serde::Serialize;

use crate::bias::{estimate_second_order, reduced_bias_eta, KStarRule, SecondOrderParams};
use crate::error::{Error, Result};
use crate::estimators::{estimate, EstimatorSpec, Margin};
use crate::pseudo::{BivariateSample, PseudoSample, TiePolicy};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SecondOrderChoice {
    /// Estimate from the sample at `k0` (default `floor(n^0.999)`).
    Estimate { k0: Option<usize> },
    UserSupplied { tau: f64, beta: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimateOptions {
    /// `q` values of the conjugate parametrization; `q = 1` is always added.
    pub q_list: Vec<f64>,
    /// Largest `k/n` on the path.
    pub k_max_fraction: f64,
    pub margin: Margin,
    pub level: f64,
    pub reduce_bias: bool,
    pub kstar_rule: KStarRule,
    pub second_order: SecondOrderChoice,
    pub tie_policy: TiePolicy,
}

impl Default for EstimateOptions {
    fn default() -> Self {
        Self {
            q_list: vec![0.5, 1.0, 1.5],
            k_max_fraction: 0.3,
            margin: Margin::FrechetShifted,
            level: 0.95,
            reduce_bias: false,
            kstar_rule: KStarRule::default(),
            second_order: SecondOrderChoice::Estimate { k0: None },
            tie_policy: TiePolicy::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EstimateRow {
    pub q: f64,
    pub k: usize,
    pub k_over_n: f64,
    pub eta: Option<f64>,
    pub ci: Option<(f64, f64)>,
    pub margin: Margin,
    pub reduced: bool,
}

fn q_values(list: &[f64]) -> Result<Vec<f64>> {
    let mut qs = list.to_vec();
    if let Some(&q) = qs.iter().find(|q| !(**q > 0.0 && q.is_finite())) {
        return Err(Error::Config(format!("q = {q} must be positive")));
    }
    qs.push(1.0);
    qs.sort_by(f64::total_cmp);
    qs.dedup();
    Ok(qs)
}

/// Second-order parameters for the reduced-bias rows of `sample`.
pub fn second_order_for(pseudo: &PseudoSample, choice: SecondOrderChoice) -> Result<SecondOrderParams> {
    match choice {
        SecondOrderChoice::Estimate { k0 } => estimate_second_order(pseudo, k0),
        SecondOrderChoice::UserSupplied { tau, beta } => SecondOrderParams::user_supplied(tau, beta),
    }
}

/// Raw rows for every `q` and `k = 1..=floor(k_max * n)`, followed by the
/// reduced-bias rows when requested. Evaluation failures leave `eta` empty
/// and intervals outside the variance domain leave `ci` empty.
pub fn estimate_paths(sample: &BivariateSample, opts: &EstimateOptions) -> Result<Vec<EstimateRow>> {
    if !(opts.k_max_fraction > 0.0 && opts.k_max_fraction < 1.0) {
        return Err(Error::Config(format!("k-max fraction {} not in (0, 1)", opts.k_max_fraction)));
    }
    if !(opts.level > 0.0 && opts.level < 1.0) {
        return Err(Error::Config(format!("confidence level {} not in (0, 1)", opts.level)));
    }
    let qs = q_values(&opts.q_list)?;
    let pseudo = PseudoSample::new(sample, opts.tie_policy)?;
    let n = pseudo.n();
    let k_max = ((n as f64 * opts.k_max_fraction).floor() as usize).min(n - 1);
    let nf = n as f64;
    let mut rows = Vec::new();

    for &q in &qs {
        let spec = EstimatorSpec::conjugate(q, opts.margin)?;
        for k in 1..=k_max {
            let est = estimate(&pseudo, k, &spec, opts.level, None).ok();
            rows.push(EstimateRow {
                q,
                k,
                k_over_n: k as f64 / nf,
                eta: est.map(|e| e.eta),
                ci: est.and_then(|e| e.ci),
                margin: opts.margin,
                reduced: false,
            });
        }
    }

    if opts.reduce_bias {
        let so = second_order_for(&pseudo, opts.second_order)?;
        for &q in &qs {
            let a = EstimatorSpec::conjugate(q, Margin::FrechetShifted)?.a();
            for k in 1..=k_max {
                let ks = opts.kstar_rule.resolve(n, k);
                let est = reduced_bias_eta(&pseudo, k, ks, a, &so, opts.level).ok();
                rows.push(EstimateRow {
                    q,
                    k,
                    k_over_n: k as f64 / nf,
                    eta: est.map(|e| e.eta),
                    ci: est.and_then(|e| e.ci),
                    margin: Margin::FrechetShifted,
                    reduced: true,
                });
            }
        }
    }
    Ok(rows)
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// CSV with columns `q,k,k_over_n,eta,ci_low,ci_high,margin,reduced`.
pub fn write_estimate_csv<W: Write>(rows: &[EstimateRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["q", "k", "k_over_n", "eta", "ci_low", "ci_high", "margin", "reduced"])?;
    for r in rows {
        w.write_record([
            r.q.to_string(),
            r.k.to_string(),
            r.k_over_n.to_string(),
            opt(r.eta),
            opt(r.ci.map(|c| c.0)),
            opt(r.ci.map(|c| c.1)),
            r.margin.to_string(),
            r.reduced.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<output>", e))?;
    Ok(())
}
