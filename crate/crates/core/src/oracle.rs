//! Slow reference implementations used to cross-check the fast paths.

use crate::error::{Error, Result};
use crate::estimators::tail_functional;
use crate::pseudo::{joint_exceedance_count, BivariateSample, PseudoSample, TiePolicy};
use crate::rng::{open_unit, stream_rng};

/// `M_{a,b}` by direct powers and logarithms, without log-sum-exp.
pub fn naive_tail_functional(order_stats: &[f64], k: usize, a: f64, b: f64) -> f64 {
    let n = order_stats.len();
    let threshold = order_stats[n - k - 1];
    let mut acc = 0.0;
    for i in 0..k {
        let ratio = order_stats[n - 1 - i] / threshold;
        acc += if a == 0.0 { ratio.ln() } else { ratio.powf(a) };
    }
    acc /= k as f64;
    let big_a = if a == 0.0 { acc.exp() } else { acc.powf(1.0 / a) };
    if b == 0.0 {
        big_a.ln()
    } else {
        (big_a.powf(b) - 1.0) / b
    }
}

/// Joint exceedances at level `m` by pairwise comparison: pair `i` counts
/// when at most `m` values in each column are `>=` its own.
pub fn naive_joint_exceedance(sample: &BivariateSample, m: usize) -> usize {
    let (x, y) = (sample.x(), sample.y());
    (0..x.len())
        .filter(|&i| {
            let above_x = x.iter().filter(|&&v| v >= x[i]).count();
            let above_y = y.iter().filter(|&&v| v >= y[i]).count();
            above_x <= m && above_y <= m
        })
        .count()
}

/// Outcome of [`check_identities`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdentityReport {
    pub n: usize,
    pub count_checks: usize,
    pub count_mismatches: usize,
    pub functional_checks: usize,
    /// Largest relative gap between the fast and the naive functional.
    pub max_functional_error: f64,
}

impl IdentityReport {
    pub fn holds(&self, tol: f64) -> bool {
        self.count_mismatches == 0 && self.max_functional_error <= tol
    }
}

const AB_GRID: [(f64, f64); 7] = [
    (0.0, 0.0),
    (0.5, -0.5),
    (-0.5, 0.5),
    (1.0, 0.0),
    (0.0, 1.5),
    (-2.0, 0.25),
    (0.9, -0.9),
];

/// Draw a random dependent sample of size `n` from `seed` and compare
/// the joint-exceedance count, its pseudo-observation form and the
/// pairwise recount for every level, and the tail functional against the
/// naive loop for every `k` on the Pareto and shifted Fréchet order
/// statistics.
pub fn check_identities(n: usize, seed: u64) -> Result<IdentityReport> {
    if n < 2 {
        return Err(Error::ParameterDomain(format!("n = {n} is below 2")));
    }
    let mut rng = stream_rng(seed, 0);
    let mix = open_unit(&mut rng);
    let x: Vec<f64> = (0..n).map(|_| open_unit(&mut rng)).collect();
    let y: Vec<f64> = x.iter().map(|&v| mix * v + (1.0 - mix) * open_unit(&mut rng)).collect();
    let sample = BivariateSample::new(x, y)?;
    let pseudo = PseudoSample::new(&sample, TiePolicy::Strict)?;

    let mut report = IdentityReport {
        n,
        count_checks: 0,
        count_mismatches: 0,
        functional_checks: 0,
        max_functional_error: 0.0,
    };
    for m in 1..=n {
        let direct = joint_exceedance_count(&sample, m, 1.0)?;
        let via_t = pseudo.t_exceedance_count(m);
        let naive = naive_joint_exceedance(&sample, m);
        report.count_checks += 1;
        if direct != via_t || direct != naive {
            report.count_mismatches += 1;
        }
    }
    for stats in [pseudo.t_sorted(), pseudo.vstar_sorted()] {
        for k in 1..n {
            for (a, b) in AB_GRID {
                let fast = tail_functional(stats, k, a, b)?;
                let slow = naive_tail_functional(stats, k, a, b);
                let err = (fast - slow).abs() / slow.abs().max(1.0);
                report.functional_checks += 1;
                report.max_functional_error = report.max_functional_error.max(err);
            }
        }
    }
    Ok(report)
}
