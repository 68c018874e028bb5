//! Second-order parameters and the reduced-bias estimator.
//!
//! The reduced-bias estimator on the shifted Fréchet sequence is
//!
//! ```text
//! η̃ = η̂ { 1 - ( β̂ (n/k)^(-τ̃) + 1/(1 + 2 V_(n-k*)) ) (1 - aη̂)/(1 - aη̂ + τ̃) }
//! ```
//!
//! where `η̂` is the balanced `(a, -a)` estimator on `V*` and `V_(n-k*)` the
//! `(n-k*)`-th ascending order statistic of the unshifted `V`. The
//! second-order pair `(τ̂, β̂)` comes from the statistics-ratio estimator of
//! `τ` and the companion `β` estimator, computed on the same `V*` sequence
//! at a high threshold `k0`, so that they target the second-order
//! parameters `τ̃ = min(τ, η)` and `β̄` of `V*` directly.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{tail_functional, EtaEstimate, Margin};
use crate::pseudo::PseudoSample;

/// Minimum sample size for second-order estimation.
pub const MIN_SECOND_ORDER_N: usize = 50;

/// Where a pair `(τ, β)` came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SecondOrderSource {
    Estimated,
    /// Known values `(τ̃, β̄)` of the model.
    Oracle,
    UserSupplied,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SecondOrderParams {
    pub tau_hat: f64,
    pub beta_hat: f64,
    /// Threshold used; `0` when not estimated.
    pub k0: usize,
    pub source: SecondOrderSource,
}

impl SecondOrderParams {
    pub fn user_supplied(tau: f64, beta: f64) -> Result<Self> {
        Self::given(tau, beta, SecondOrderSource::UserSupplied)
    }

    pub fn oracle(tau: f64, beta: f64) -> Result<Self> {
        Self::given(tau, beta, SecondOrderSource::Oracle)
    }

    fn given(tau: f64, beta: f64, source: SecondOrderSource) -> Result<Self> {
        if !(tau > 0.0 && tau.is_finite()) || !beta.is_finite() {
            return Err(Error::ParameterDomain(format!(
                "second-order parameters need tau > 0 and finite beta, got ({tau}, {beta})"
            )));
        }
        Ok(Self {
            tau_hat: tau,
            beta_hat: beta,
            k0: 0,
            source,
        })
    }
}

/// Second-order parameter of the shifted Fréchet sequence: `τ` when
/// `τ < η`, else `η`.
pub fn effective_tau(eta: f64, tau: f64) -> f64 {
    if tau < eta {
        tau
    } else {
        eta
    }
}

/// Default second-order threshold `floor(n^0.999)`.
pub fn default_k0(n: usize) -> usize {
    ((n as f64).powf(0.999).floor() as usize).min(n.saturating_sub(1))
}

/// `(τ̂, β̂)` from the ascending order statistics of a positive sample with
/// Pareto-type tail, using the top `k0` values.
pub fn second_order_from_order_stats(order_stats: &[f64], k0: usize) -> Result<(f64, f64)> {
    let n = order_stats.len();
    if n < MIN_SECOND_ORDER_N {
        return Err(Error::InsufficientData(format!(
            "second-order estimation needs n >= {MIN_SECOND_ORDER_N}, got {n}"
        )));
    }
    if k0 < 3 || k0 >= n {
        return Err(Error::Bounds(format!("k0 = {k0} outside 3..={}", n - 1)));
    }
    let threshold = order_stats[n - k0 - 1];
    if !(threshold > 0.0) {
        return Err(Error::Domain(format!("threshold {threshold} is not positive")));
    }
    // Top values in descending order: logs[i] = ln X_(n-i), i = 0..k0.
    let logs: Vec<f64> = order_stats[n - k0 - 1..].iter().rev().map(|z| z.ln()).collect();
    let base = logs[k0];
    let kf = k0 as f64;
    let mut m = [0.0; 3];
    for l in &logs[..k0] {
        let e = l - base;
        m[0] += e;
        m[1] += e * e;
        m[2] += e * e * e;
    }
    for v in &mut m {
        *v /= kf;
    }
    if !(m[0] > 0.0) {
        return Err(Error::EstimationFailure(format!(
            "top {k0} order statistics are constant"
        )));
    }
    let half_log_m2 = 0.5 * (m[1] / 2.0).ln();
    let third_log_m3 = (m[2] / 6.0).ln() / 3.0;
    let ratio = (m[0].ln() - half_log_m2) / (half_log_m2 - third_log_m3);
    let tau = (3.0 * (ratio - 1.0) / (ratio - 3.0)).abs();
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::Convention(format!(
            "tau estimate {tau} is not positive (statistic ratio {ratio}, moments {m:?}, k0 = {k0})"
        )));
    }

    // Scaled log-spacings U_i = i (ln X_(n-i+1) - ln X_(n-i)), i = 1..k0,
    // with weights (i/k0)^(-rho), rho = -tau.
    let rho = -tau;
    let (mut d_rho, mut d0, mut dd_rho, mut dd_2rho) = (0.0, 0.0, 0.0, 0.0);
    for i in 1..=k0 {
        let u = i as f64 * (logs[i - 1] - logs[i]);
        let w = (i as f64 / kf).powf(-rho);
        d_rho += w;
        d0 += u;
        dd_rho += w * u;
        dd_2rho += w * w * u;
    }
    let (d_rho, d0, dd_rho, dd_2rho) = (d_rho / kf, d0 / kf, dd_rho / kf, dd_2rho / kf);
    let den = d_rho * dd_rho - dd_2rho;
    let beta = (kf / n as f64).powf(rho) * (d_rho * d0 - dd_rho) / den;
    if !beta.is_finite() {
        return Err(Error::EstimationFailure(format!(
            "beta estimate is not finite (denominator {den}, k0 = {k0})"
        )));
    }
    Ok((tau, beta))
}

/// `(τ̂, β̂)` on the shifted Fréchet pseudo-observations at threshold `k0`
/// (default `floor(n^0.999)`).
pub fn estimate_second_order(pseudo: &PseudoSample, k0: Option<usize>) -> Result<SecondOrderParams> {
    let k0 = k0.unwrap_or_else(|| default_k0(pseudo.n()));
    let (tau_hat, beta_hat) = second_order_from_order_stats(pseudo.vstar_sorted(), k0)?;
    Ok(SecondOrderParams {
        tau_hat,
        beta_hat,
        k0,
        source: SecondOrderSource::Estimated,
    })
}

/// Multiplier applied to `η̂`; `beta_term` is `β̂ (n/k)^(-τ)` and `v_kstar`
/// the unshifted Fréchet order statistic `V_(n-k*)`.
pub fn correction_factor(eta_hat: f64, a: f64, beta_term: f64, v_kstar: f64, tau: f64) -> Result<f64> {
    let num = 1.0 - a * eta_hat;
    let den = num + tau;
    if !(den > 0.0) {
        return Err(Error::Domain(format!(
            "correction denominator 1 - a*eta + tau = {den} is not positive"
        )));
    }
    let shift = 1.0 / (1.0 + 2.0 * v_kstar);
    Ok(1.0 - (beta_term + shift) * num / den)
}

/// Rule for the number `k*` of top pseudo-observations in the shift term.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum KStarRule {
    /// `floor(n^p)`.
    PowN(f64),
    /// `floor(sqrt(k))`.
    SqrtK,
    Fixed(usize),
}

impl Default for KStarRule {
    fn default() -> Self {
        KStarRule::PowN(0.3)
    }
}

impl KStarRule {
    /// `k*` for sample size `n` and threshold `k`, capped at `floor(sqrt(k))`
    /// and at least 1.
    pub fn resolve(&self, n: usize, k: usize) -> usize {
        let cap = isqrt(k);
        let raw = match *self {
            KStarRule::PowN(p) => (n as f64).powf(p).floor() as usize,
            KStarRule::SqrtK => cap,
            KStarRule::Fixed(v) => v,
        };
        raw.min(cap).max(1)
    }
}

fn isqrt(k: usize) -> usize {
    let mut r = (k as f64).sqrt() as usize;
    while r * r > k {
        r -= 1;
    }
    while (r + 1) * (r + 1) <= k {
        r += 1;
    }
    r
}

impl fmt::Display for KStarRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KStarRule::PowN(p) => write!(f, "pow{p}"),
            KStarRule::SqrtK => f.write_str("sqrtk"),
            KStarRule::Fixed(v) => write!(f, "{v}"),
        }
    }
}

impl FromStr for KStarRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "sqrtk" {
            return Ok(KStarRule::SqrtK);
        }
        if let Some(p) = s.strip_prefix("pow") {
            return match p.parse::<f64>() {
                Ok(p) if p > 0.0 && p < 1.0 => Ok(KStarRule::PowN(p)),
                _ => Err(Error::Config(format!("k* exponent in '{s}' must lie in (0, 1)"))),
            };
        }
        match s.parse::<usize>() {
            Ok(v) if v >= 1 => Ok(KStarRule::Fixed(v)),
            _ => Err(Error::Config(format!(
                "k* rule '{s}' is not 'sqrtk', 'pow<p>' or a positive integer"
            ))),
        }
    }
}

impl TryFrom<String> for KStarRule {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<KStarRule> for String {
    fn from(r: KStarRule) -> String {
        r.to_string()
    }
}

/// Reduced-bias estimate at threshold `k` with `k_star <= sqrt(k)` top
/// values in the shift term. The interval uses the same asymptotic variance
/// as the uncorrected estimator, evaluated at the corrected point.
pub fn reduced_bias_eta(
    pseudo: &PseudoSample,
    k: usize,
    k_star: usize,
    a: f64,
    so: &SecondOrderParams,
    level: f64,
) -> Result<EtaEstimate> {
    let n = pseudo.n();
    if k == 0 || k >= n {
        return Err(Error::Bounds(format!("k = {k} outside 1..={}", n - 1)));
    }
    if k_star == 0 || k_star * k_star > k {
        return Err(Error::Constraint(format!("k* = {k_star} must lie in 1..=floor(sqrt({k}))")));
    }
    let eta = tail_functional(pseudo.vstar_sorted(), k, a, -a)?;
    let tau = so.tau_hat;
    let beta_term = so.beta_hat * (n as f64 / k as f64).powf(-tau);
    let v_kstar = pseudo.v_sorted()[n - k_star - 1];
    let factor = correction_factor(eta, a, beta_term, v_kstar, tau)?;
    Ok(EtaEstimate::summarize(eta * factor, k, a, Margin::FrechetShifted, Some(tau), level))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::copula::{CopulaModel, Family};
    use crate::pseudo::TiePolicy;
    use crate::rng::{open_unit, stream_rng};
    use proptest::prelude::*;

    fn frank_pseudo(n: usize, seed: u64) -> PseudoSample {
        let s = CopulaModel::new(Family::Frank, 0.5).unwrap().sample(n, seed).unwrap();
        PseudoSample::new(&s, TiePolicy::Strict).unwrap()
    }

    #[test]
    fn effective_tau_cases() {
        assert_eq!(effective_tau(1.0 / 3.0, 2.0 / 3.0), 1.0 / 3.0);
        assert_eq!(effective_tau(0.5, 0.5), 0.5);
        assert_eq!(effective_tau(0.8, 0.1), 0.1);
    }

    #[test]
    fn factor_plug_in_arithmetic() {
        let f = correction_factor(0.5, 0.0, 0.1, 4.5, 0.5).unwrap();
        assert!((f - 13.0 / 15.0).abs() < 1e-15);
        assert!((0.5 * f - 0.433_333_333).abs() < 1e-9);
        assert_eq!(correction_factor(0.5, 0.3, 0.0, f64::INFINITY, 0.4).unwrap(), 1.0);
        assert!(matches!(
            correction_factor(0.5, 4.0, 0.1, 4.5, 0.5),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn user_supplied_passthrough() {
        let so = SecondOrderParams::user_supplied(0.5, 0.2).unwrap();
        assert_eq!((so.tau_hat, so.beta_hat, so.source), (0.5, 0.2, SecondOrderSource::UserSupplied));
        assert!(SecondOrderParams::user_supplied(0.0, 0.2).is_err());
        assert!(SecondOrderParams::user_supplied(0.5, f64::NAN).is_err());
    }

    #[test]
    fn kstar_rules() {
        assert_eq!(KStarRule::PowN(0.3).resolve(500, 50), 6);
        assert_eq!(KStarRule::PowN(0.3).resolve(500, 25), 5);
        assert_eq!(KStarRule::SqrtK.resolve(500, 50), 7);
        assert_eq!(KStarRule::Fixed(3).resolve(500, 4), 2);
        assert_eq!(KStarRule::Fixed(3).resolve(500, 1), 1);
        for k in 1..2000 {
            let s = isqrt(k);
            assert!(s * s <= k && (s + 1) * (s + 1) > k);
        }
        for text in ["pow0.3", "sqrtk", "12"] {
            let r: KStarRule = text.parse().unwrap();
            assert_eq!(r.to_string(), text);
        }
        assert!("pow1.5".parse::<KStarRule>().is_err());
        assert!("0".parse::<KStarRule>().is_err());
        assert!("often".parse::<KStarRule>().is_err());
    }

    #[test]
    fn kstar_above_sqrt_k_is_rejected() {
        let p = frank_pseudo(500, 1);
        let so = SecondOrderParams::user_supplied(0.5, 0.0).unwrap();
        assert!(matches!(
            reduced_bias_eta(&p, 25, 6, 0.1, &so, 0.95),
            Err(Error::Constraint(_))
        ));
        assert!(reduced_bias_eta(&p, 25, 5, 0.1, &so, 0.95).is_ok());
    }

    #[test]
    fn reduced_estimate_matches_hand_assembly() {
        let p = frank_pseudo(500, 2);
        let (k, ks, a) = (50, 6, 0.1);
        let so = SecondOrderParams::user_supplied(0.4, 0.3).unwrap();
        let got = reduced_bias_eta(&p, k, ks, a, &so, 0.95).unwrap();
        let eta = tail_functional(p.vstar_sorted(), k, a, -a).unwrap();
        let v = p.v_sorted()[500 - ks - 1];
        let term = 0.3 * (10f64).powf(-0.4) + 1.0 / (1.0 + 2.0 * v);
        let want = eta * (1.0 - term * (1.0 - a * eta) / (1.0 - a * eta + 0.4));
        assert!((got.eta - want).abs() < 1e-14);
        assert_eq!(got.margin, Margin::FrechetShifted);
        let (lo, hi) = got.ci.unwrap();
        assert!(lo < got.eta && got.eta < hi);
    }

    #[test]
    fn shift_term_shrinks_as_kstar_decreases() {
        let p = frank_pseudo(1000, 3);
        let n = p.n();
        let terms: Vec<f64> = (1..=20)
            .map(|ks| 1.0 / (1.0 + 2.0 * p.v_sorted()[n - ks - 1]))
            .collect();
        assert!(terms.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn second_order_errors() {
        let flat = vec![2.0; 100];
        assert!(matches!(
            second_order_from_order_stats(&flat, 60),
            Err(Error::EstimationFailure(_))
        ));
        assert!(matches!(
            second_order_from_order_stats(&flat[..40], 30),
            Err(Error::InsufficientData(_))
        ));
        let p = frank_pseudo(100, 4);
        let so = estimate_second_order(&p, None).unwrap();
        assert_eq!(so.k0, 99);
        assert_eq!(so.source, SecondOrderSource::Estimated);
        assert!(so.tau_hat > 0.0 && so.beta_hat.is_finite());
    }

    #[test]
    fn default_threshold() {
        assert_eq!(default_k0(50), 49);
        assert_eq!(default_k0(500), 496);
        assert_eq!(default_k0(5000), 4957);
    }

    #[test]
    fn recovers_burr_second_order_parameters() {
        // Burr quantile U(t) = (t - 1)^gamma = t^gamma (1 - gamma/t + ...):
        // second-order rho = -1 and beta = 1 in the Hall-Welsh form.
        let gamma = 0.5;
        let n = 50_000;
        let mut taus = Vec::new();
        let mut betas = Vec::new();
        for r in 0..20 {
            let mut rng = stream_rng(77, r);
            let mut x: Vec<f64> = (0..n)
                .map(|_| (1.0 / open_unit(&mut rng) - 1.0).powf(gamma))
                .collect();
            x.sort_by(f64::total_cmp);
            let (t, b) = second_order_from_order_stats(&x, default_k0(n)).unwrap();
            taus.push(t);
            betas.push(b);
        }
        taus.sort_by(f64::total_cmp);
        betas.sort_by(f64::total_cmp);
        let (t, b) = (taus[10], betas[10]);
        assert!((t - 1.0).abs() < 0.3, "median tau = {t}");
        assert!((b - 1.0).abs() < 0.5, "median beta = {b}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn nonnegative_beta_never_raises_the_estimate(
            seed in 0u64..10_000,
            frac in 0.02f64..0.3,
            a in -1.0f64..0.9,
            tau in 0.05f64..2.0,
            beta in 0.0f64..3.0,
        ) {
            let p = frank_pseudo(300, seed);
            let k = ((300.0 * frac) as usize).max(4);
            let ks = KStarRule::default().resolve(300, k);
            let so = SecondOrderParams::user_supplied(tau, beta).unwrap();
            let raw = tail_functional(p.vstar_sorted(), k, a, -a).unwrap();
            let red = reduced_bias_eta(&p, k, ks, a, &so, 0.95).unwrap();
            prop_assert!(red.eta <= raw);
        }
    }
}
