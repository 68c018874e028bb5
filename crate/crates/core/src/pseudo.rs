//! Ranks and rank-based pseudo-observations.
//!
//! For a pair with ranks `(r_x, r_y)` the three pseudo-observation scales are
//! driven by the joint minimum rank `m = min(r_x, r_y)`:
//!
//! * standard Pareto: `T = (n+1) / (n+1-m)`
//! * unit Fréchet:    `V = 1 / log((n+1)/m)`
//! * shifted Fréchet: `V* = V + 1/2`
//!
//! All three are stored as ascending order statistics, which is the form the
//! estimators consume.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{open_unit, stream_rng};

/// Paired observations `(x_i, y_i)`, `i = 1..n`.
#[derive(Debug, Clone, PartialEq)]
pub struct BivariateSample {
    x: Vec<f64>,
    y: Vec<f64>,
    labels: Option<Vec<String>>,
}

impl BivariateSample {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::InsufficientData(format!(
                "column lengths differ ({} vs {})",
                x.len(),
                y.len()
            )));
        }
        if x.len() < 2 {
            return Err(Error::InsufficientData(format!(
                "need at least 2 pairs, got {}",
                x.len()
            )));
        }
        if let Some(i) = x.iter().chain(&y).position(|v| v.is_nan()) {
            let row = i % x.len();
            return Err(Error::Parse {
                row,
                message: "NaN in sample".into(),
            });
        }
        Ok(Self { x, y, labels: None })
    }

    /// Attach one label (date, station id, ...) per pair.
    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.x.len() {
            return Err(Error::InsufficientData(format!(
                "{} labels for {} pairs",
                labels.len(),
                self.x.len()
            )));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }
}

/// How tied values are ranked.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TiePolicy {
    /// Stable ordinal ranks: among equal values, earlier rows rank lower.
    #[default]
    FirstOccurrence,
    /// Any tie is an error.
    Strict,
    /// Add uniform noise of relative size 1e-9 drawn from `seed`, then rank
    /// ordinally.
    Jitter { seed: u64 },
}

const JITTER_SCALE: f64 = 1e-9;

fn ordinal_ranks(values: &[f64], column: &'static str, strict: bool) -> Result<Vec<usize>> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    // sort_by is stable, so ties keep input order.
    order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
    if strict {
        if let Some(w) = order.windows(2).find(|w| values[w[0]] == values[w[1]]) {
            return Err(Error::Tie {
                column,
                value: values[w[0]],
            });
        }
    }
    let mut ranks = vec![0; values.len()];
    for (pos, &i) in order.iter().enumerate() {
        ranks[i] = pos + 1;
    }
    Ok(ranks)
}

fn jittered(values: &[f64], rng: &mut impl rand::RngCore) -> Vec<f64> {
    values
        .iter()
        .map(|&v| v + (open_unit(rng) - 0.5) * JITTER_SCALE * v.abs().max(1.0))
        .collect()
}

/// Marginal ranks `R(x_i) = #{j : x_j <= x_i}` for both columns, resolved to
/// permutations of `1..=n` according to `policy`.
pub fn compute_ranks(sample: &BivariateSample, policy: TiePolicy) -> Result<(Vec<usize>, Vec<usize>)> {
    match policy {
        TiePolicy::FirstOccurrence => Ok((
            ordinal_ranks(sample.x(), "x", false)?,
            ordinal_ranks(sample.y(), "y", false)?,
        )),
        TiePolicy::Strict => Ok((
            ordinal_ranks(sample.x(), "x", true)?,
            ordinal_ranks(sample.y(), "y", true)?,
        )),
        TiePolicy::Jitter { seed } => {
            let mut rng = stream_rng(seed, 0);
            let x = jittered(sample.x(), &mut rng);
            let y = jittered(sample.y(), &mut rng);
            Ok((ordinal_ranks(&x, "x", false)?, ordinal_ranks(&y, "y", false)?))
        }
    }
}

fn check_permutation(ranks: &[usize], n: usize) -> Result<()> {
    let mut seen = vec![false; n + 1];
    for &r in ranks {
        if r == 0 || r > n || seen[r] {
            return Err(Error::Bounds(format!("rank vector is not a permutation of 1..={n}")));
        }
        seen[r] = true;
    }
    Ok(())
}

fn joint_min_ranks<'a>(rx: &'a [usize], ry: &'a [usize]) -> impl Iterator<Item = usize> + 'a {
    rx.iter().zip(ry).map(|(&a, &b)| a.min(b))
}

fn pareto_from_min_rank(n: usize, m: usize) -> f64 {
    let np1 = (n + 1) as f64;
    np1 / (np1 - m as f64)
}

fn frechet_from_min_rank(n: usize, m: usize) -> f64 {
    // -log(m/(n+1)) = log1p((n+1-m)/m)
    let gap = (n + 1 - m) as f64;
    1.0 / (gap / m as f64).ln_1p()
}

/// Standard-Pareto pseudo-observations
/// `T_i = (n+1)/(n+1-R(x_i)) ∧ (n+1)/(n+1-R(y_i))`, in input order.
pub fn pareto_pseudo(rx: &[usize], ry: &[usize]) -> Vec<f64> {
    let n = rx.len();
    joint_min_ranks(rx, ry).map(|m| pareto_from_min_rank(n, m)).collect()
}

/// Unit-Fréchet pseudo-observations
/// `V_i = 1 / max(-log(R(x_i)/(n+1)), -log(R(y_i)/(n+1)))`, in input order.
pub fn frechet_pseudo(rx: &[usize], ry: &[usize]) -> Vec<f64> {
    let n = rx.len();
    joint_min_ranks(rx, ry).map(|m| frechet_from_min_rank(n, m)).collect()
}

/// Location shift `V* = V + 1/2`.
pub fn shift_half(v: &[f64]) -> Vec<f64> {
    v.iter().map(|&x| x + 0.5).collect()
}

fn sorted(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v
}

/// Ranks plus the ascending order statistics of `T`, `V` and `V*`.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoSample {
    n: usize,
    rx: Vec<usize>,
    ry: Vec<usize>,
    t_sorted: Vec<f64>,
    v_sorted: Vec<f64>,
    vstar_sorted: Vec<f64>,
}

impl PseudoSample {
    pub fn new(sample: &BivariateSample, policy: TiePolicy) -> Result<Self> {
        let (rx, ry) = compute_ranks(sample, policy)?;
        Self::from_ranks(rx, ry)
    }

    pub fn from_ranks(rx: Vec<usize>, ry: Vec<usize>) -> Result<Self> {
        let n = rx.len();
        if ry.len() != n {
            return Err(Error::Bounds(format!("rank vectors differ in length ({} vs {})", n, ry.len())));
        }
        if n < 2 {
            return Err(Error::InsufficientData(format!("need at least 2 pairs, got {n}")));
        }
        check_permutation(&rx, n)?;
        check_permutation(&ry, n)?;
        let t_sorted = sorted(pareto_pseudo(&rx, &ry));
        let v_sorted = sorted(frechet_pseudo(&rx, &ry));
        let vstar_sorted = shift_half(&v_sorted);
        Ok(Self {
            n,
            rx,
            ry,
            t_sorted,
            v_sorted,
            vstar_sorted,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn rx(&self) -> &[usize] {
        &self.rx
    }

    pub fn ry(&self) -> &[usize] {
        &self.ry
    }

    pub fn t_sorted(&self) -> &[f64] {
        &self.t_sorted
    }

    pub fn v_sorted(&self) -> &[f64] {
        &self.v_sorted
    }

    pub fn vstar_sorted(&self) -> &[f64] {
        &self.vstar_sorted
    }

    /// `T` in input order.
    pub fn t_values(&self) -> Vec<f64> {
        pareto_pseudo(&self.rx, &self.ry)
    }

    /// `#{i : T_i >= (n+1)/m}`, the pseudo-observation side of the
    /// joint-exceedance identity.
    pub fn t_exceedance_count(&self, m: usize) -> usize {
        let threshold = (self.n + 1) as f64 / m as f64;
        let below = self
            .t_sorted
            .partition_point(|t| t.partial_cmp(&threshold) == Some(Ordering::Less));
        self.n - below
    }
}

/// Number of pairs with `x_i >= X_{n-m+1,n}` and `y_i >= Y_{n-m+1,n}`, where
/// `m = floor(k * x)` and `X_{j,n}` is the j-th ascending order statistic.
pub fn joint_exceedance_count(sample: &BivariateSample, k: usize, x: f64) -> Result<usize> {
    let n = sample.len();
    let level = (k as f64 * x).floor();
    if !(level >= 1.0 && level <= n as f64) {
        return Err(Error::Bounds(format!("[k*x] = {level} outside 1..={n}")));
    }
    let m = level as usize;
    let thr_x = sorted(sample.x().to_vec())[n - m];
    let thr_y = sorted(sample.y().to_vec())[n - m];
    Ok(sample
        .x()
        .iter()
        .zip(sample.y())
        .filter(|(&a, &b)| a >= thr_x && b >= thr_y)
        .count())
}
