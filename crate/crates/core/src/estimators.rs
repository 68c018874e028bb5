//! The power-mean tail functional and the residual dependence estimators
//! built on it.
//!
//! For ascending order statistics `z_(1) <= ... <= z_(n)` and `k` top values,
//!
//! ```text
//! A_a = [ (1/k) Σ_{i<k} (z_(n-i) / z_(n-k))^a ]^(1/a)        (a = 0: geometric mean)
//! M_{a,b} = (A_a^b - 1) / b                                  (b = 0: log A_a)
//! ```
//!
//! `a = b = 0` is the Hill estimator. Applied to the Pareto pseudo-observations
//! this gives the canonical estimators, applied to the shifted Fréchet ones
//! the location-shifted class.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::normal;
use crate::pseudo::PseudoSample;

/// Which pseudo-observation sequence an estimator runs on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Margin {
    /// Shifted unit-Fréchet `V + 1/2`.
    FrechetShifted,
    /// Unshifted unit-Fréchet `V`.
    FrechetUnshifted,
    /// Standard Pareto `T`.
    ParetoT,
}

impl Margin {
    pub fn as_str(self) -> &'static str {
        match self {
            Margin::FrechetShifted => "frechet_shifted",
            Margin::FrechetUnshifted => "frechet_unshifted",
            Margin::ParetoT => "pareto_t",
        }
    }

    pub fn order_statistics(self, pseudo: &PseudoSample) -> &[f64] {
        match self {
            Margin::FrechetShifted => pseudo.vstar_sorted(),
            Margin::FrechetUnshifted => pseudo.v_sorted(),
            Margin::ParetoT => pseudo.t_sorted(),
        }
    }
}

impl fmt::Display for Margin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Margin {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "frechet_shifted" | "shifted" => Ok(Margin::FrechetShifted),
            "frechet_unshifted" | "frechet" => Ok(Margin::FrechetUnshifted),
            "pareto_t" | "pareto" => Ok(Margin::ParetoT),
            other => Err(Error::Config(format!("unknown margin '{other}'"))),
        }
    }
}

/// How the `(a, b)` pair was specified.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Parametrization {
    RawAB,
    /// `(a, b) = (1/p, 1/q - 1)` with conjugate `1/p + 1/q = 1`.
    ConjugateQ(f64),
    /// Mean-of-order-p: `(a, b) = (1/(1-p), q - 1)` with `1/p + 1/q = 1`.
    MeanOfOrderP { p: f64, q: f64 },
}

/// Resolved `(a, b)` pair plus the margin it is applied to.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorSpec {
    a: f64,
    b: f64,
    margin: Margin,
    parametrization: Parametrization,
}

fn check_q(q: f64) -> Result<()> {
    if q > 0.0 && q.is_finite() {
        Ok(())
    } else {
        Err(Error::ParameterDomain(format!("q must be positive and finite, got {q}")))
    }
}

impl EstimatorSpec {
    pub fn raw(a: f64, b: f64, margin: Margin) -> Result<Self> {
        if !a.is_finite() || !b.is_finite() {
            return Err(Error::ParameterDomain(format!("(a, b) = ({a}, {b}) not finite")));
        }
        Ok(Self {
            a,
            b,
            margin,
            parametrization: Parametrization::RawAB,
        })
    }

    pub fn hill(margin: Margin) -> Self {
        Self {
            a: 0.0,
            b: 0.0,
            margin,
            parametrization: Parametrization::ConjugateQ(1.0),
        }
    }

    /// Primary parametrization; `q = 1` is exactly the Hill estimator.
    pub fn conjugate(q: f64, margin: Margin) -> Result<Self> {
        check_q(q)?;
        if q == 1.0 {
            return Ok(Self::hill(margin));
        }
        let inv_q = 1.0 / q;
        Ok(Self {
            a: 1.0 - inv_q,
            b: inv_q - 1.0,
            margin,
            parametrization: Parametrization::ConjugateQ(q),
        })
    }

    /// Mean-of-order-p parametrization indexed by the conjugate `q`; meets
    /// [`EstimatorSpec::conjugate`] at `q = 1`.
    pub fn mean_of_order(q: f64, margin: Margin) -> Result<Self> {
        check_q(q)?;
        if q == 1.0 {
            return Ok(Self {
                parametrization: Parametrization::MeanOfOrderP {
                    p: f64::INFINITY,
                    q: 1.0,
                },
                ..Self::hill(margin)
            });
        }
        // p = q/(q-1) gives 1/(1-p) = 1 - q.
        Ok(Self {
            a: 1.0 - q,
            b: q - 1.0,
            margin,
            parametrization: Parametrization::MeanOfOrderP { p: q / (q - 1.0), q },
        })
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn margin(&self) -> Margin {
        self.margin
    }

    pub fn parametrization(&self) -> Parametrization {
        self.parametrization
    }

    pub fn with_margin(self, margin: Margin) -> Self {
        Self { margin, ..self }
    }

    /// The `q` the spec was built from, if any.
    pub fn q(&self) -> Option<f64> {
        match self.parametrization {
            Parametrization::RawAB => None,
            Parametrization::ConjugateQ(q) | Parametrization::MeanOfOrderP { q, .. } => Some(q),
        }
    }

    /// True for the `b = -a` subclass, the only one with closed-form
    /// variance and bias.
    pub fn is_balanced(&self) -> bool {
        self.b == -self.a
    }
}

fn log_power_mean(top_logs: &[f64], base: f64, a: f64) -> f64 {
    let k = top_logs.len() as f64;
    if a == 0.0 {
        return top_logs.iter().map(|l| l - base).sum::<f64>() / k;
    }
    // log-sum-exp of a * log-ratios: ratios reach n + 1 and |a| can be large.
    let top = top_logs
        .iter()
        .map(|l| a * (l - base))
        .fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = top_logs.iter().map(|l| (a * (l - base) - top).exp()).sum();
    (top + sum.ln() - k.ln()) / a
}

fn check_k(k: usize, n: usize) -> Result<()> {
    if k == 0 || k >= n {
        return Err(Error::Bounds(format!("k = {k} outside 1..={}", n.saturating_sub(1))));
    }
    Ok(())
}

/// `M_{a,b}` over the top `k` of the ascending `order_stats`, relative to
/// the threshold `order_stats[n-k-1]`.
pub fn tail_functional(order_stats: &[f64], k: usize, a: f64, b: f64) -> Result<f64> {
    let n = order_stats.len();
    check_k(k, n)?;
    let threshold = order_stats[n - k - 1];
    if !(threshold > 0.0) {
        return Err(Error::Domain(format!("threshold order statistic {threshold} is not positive")));
    }
    let logs: Vec<f64> = order_stats[n - k - 1..].iter().map(|z| z.ln()).collect();
    tail_functional_from_logs(&logs, k, a, b)
}

/// [`tail_functional`] on the logarithms of positive ascending order
/// statistics, for callers that evaluate many `(a, b, k)` on one sample.
pub fn tail_functional_from_logs(log_stats: &[f64], k: usize, a: f64, b: f64) -> Result<f64> {
    let n = log_stats.len();
    check_k(k, n)?;
    let log_a = log_power_mean(&log_stats[n - k..], log_stats[n - k - 1], a);
    Ok(if b == 0.0 { log_a } else { (b * log_a).exp_m1() / b })
}

/// Point estimate of `η` from the top `k` pseudo-observations.
pub fn eta_hat(pseudo: &PseudoSample, k: usize, spec: &EstimatorSpec) -> Result<f64> {
    check_k(k, pseudo.n())?;
    tail_functional(spec.margin.order_statistics(pseudo), k, spec.a, spec.b)
}

/// `σ_a²(η) = η²(1-aη)²/(1-2aη)`, finite only for `aη < 1/2`.
pub fn asymptotic_variance(a: f64, eta: f64) -> Result<f64> {
    let ae = a * eta;
    if !(ae < 0.5) {
        return Err(Error::VarianceDomain { a, eta });
    }
    Ok(eta * eta * (1.0 - ae) * (1.0 - ae) / (1.0 - 2.0 * ae))
}

/// Dominant second-order bias factor `b_a(η, τ) = (1-aη)/(1-aη+τ)`.
pub fn asymptotic_bias(a: f64, eta: f64, tau: f64) -> Result<f64> {
    let num = 1.0 - a * eta;
    let den = num + tau;
    if !(den > 0.0) {
        return Err(Error::Domain(format!(
            "bias denominator 1 - a*eta + tau = {den} is not positive"
        )));
    }
    Ok(num / den)
}

/// Normal-approximation interval `η̂ ± z σ_a(η̂)/√k` (plug-in, no bias
/// removal).
pub fn confidence_interval(estimate: f64, k: usize, a: f64, level: f64) -> Result<(f64, f64)> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::ParameterDomain(format!("confidence level {level} not in (0, 1)")));
    }
    if k == 0 {
        return Err(Error::Bounds("k must be positive".into()));
    }
    let var = asymptotic_variance(a, estimate)?;
    let half = normal::quantile((1.0 + level) / 2.0) * (var / k as f64).sqrt();
    Ok((estimate - half, estimate + half))
}

/// A point estimate together with its asymptotic summaries.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EtaEstimate {
    pub eta: f64,
    pub k: usize,
    pub a_used: f64,
    pub margin: Margin,
    /// `σ_a²` at the plug-in estimate; the standard error is `sqrt(σ_a²/k)`.
    /// `None` outside the variance domain or for unbalanced `(a, b)`.
    pub asymptotic_variance: Option<f64>,
    /// `b_a(η̂, τ)`, reported but never subtracted.
    pub bias_term: Option<f64>,
    pub ci: Option<(f64, f64)>,
}

impl EtaEstimate {
    /// Package `eta` with variance, bias factor and interval for the
    /// balanced class. The interval is omitted when `a·eta >= 1/2`.
    pub fn summarize(eta: f64, k: usize, a: f64, margin: Margin, tau: Option<f64>, level: f64) -> Self {
        let asymptotic_variance = asymptotic_variance(a, eta).ok();
        let ci = asymptotic_variance.and_then(|_| confidence_interval(eta, k, a, level).ok());
        Self {
            eta,
            k,
            a_used: a,
            margin,
            asymptotic_variance,
            bias_term: tau.and_then(|t| asymptotic_bias(a, eta, t).ok()),
            ci,
        }
    }

    pub fn std_error(&self) -> Option<f64> {
        self.asymptotic_variance.map(|v| (v / self.k as f64).sqrt())
    }
}

/// [`eta_hat`] plus variance, bias factor (when `tau` is given) and a
/// confidence interval at `level`.
pub fn estimate(
    pseudo: &PseudoSample,
    k: usize,
    spec: &EstimatorSpec,
    level: f64,
    tau: Option<f64>,
) -> Result<EtaEstimate> {
    let eta = eta_hat(pseudo, k, spec)?;
    if spec.is_balanced() {
        Ok(EtaEstimate::summarize(eta, k, spec.a, spec.margin, tau, level))
    } else {
        Ok(EtaEstimate {
            eta,
            k,
            a_used: spec.a,
            margin: spec.margin,
            asymptotic_variance: None,
            bias_term: None,
            ci: None,
        })
    }
}
