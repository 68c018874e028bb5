//! Standard normal CDF and quantile, and the bivariate normal CDF.
//!
//! `cdf` uses the `libm` port of the musl `erfc` (within an ulp or two).
//! `quantile` starts from `statrs`'s `erfc_inv` and takes one Halley step
//! against `cdf`, which brings it to machine precision. The bivariate CDF is
//! Genz's Gauss-Legendre scheme for the Drezner-Wesolowsky integral, with
//! absolute error around 1e-15.

use std::f64::consts::{FRAC_1_SQRT_2, PI, SQRT_2};

use libm::erfc;
use statrs::function::erf::erfc_inv;

/// Standard normal distribution function.
pub fn cdf(x: f64) -> f64 {
    0.5 * erfc(-x * FRAC_1_SQRT_2)
}

/// Standard normal quantile for `p` in (0, 1).
pub fn quantile(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    // 1 - p is exact for p >= 1/2, which keeps the upper tail symmetric.
    let (tail, sign) = if p < 0.5 { (p, -1.0) } else { (1.0 - p, 1.0) };
    let x = -SQRT_2 * erfc_inv(2.0 * tail);
    let density = (-0.5 * x * x).exp() / (2.0 * PI).sqrt();
    let step = (cdf(x) - tail) / density;
    let x = if step.is_finite() { x - step / (1.0 + 0.5 * x * step) } else { x };
    sign * -x
}

// Half-abscissae and weights of the 6-, 12- and 20-point Gauss-Legendre rules.
const GL6_X: [f64; 3] = [0.932_469_514_203_152_2, 0.661_209_386_466_264_7, 0.238_619_186_083_197];
const GL6_W: [f64; 3] = [0.171_324_492_379_170_5, 0.360_761_573_048_138_4, 0.467_913_934_572_690_4];
const GL12_X: [f64; 6] = [
    0.981_560_634_246_719_1,
    0.904_117_256_370_475,
    0.769_902_674_194_305,
    0.587_317_954_286_617_1,
    0.367_831_498_998_180_2,
    0.125_233_408_511_469_2,
];
const GL12_W: [f64; 6] = [
    0.047_175_336_386_511_77,
    0.106_939_325_995_318_3,
    0.160_078_328_543_346_4,
    0.203_167_426_723_065_9,
    0.233_492_536_538_354_7,
    0.249_147_045_813_402_9,
];
const GL20_X: [f64; 10] = [
    0.993_128_599_185_094_9,
    0.963_971_927_277_913_8,
    0.912_234_428_251_326,
    0.839_116_971_822_218_8,
    0.746_331_906_460_150_8,
    0.636_053_680_726_515,
    0.510_867_001_950_827_1,
    0.373_706_088_715_419_6,
    0.227_785_851_141_645_1,
    0.076_526_521_133_497_33,
];
const GL20_W: [f64; 10] = [
    0.017_614_007_139_152_12,
    0.040_601_429_800_386_94,
    0.062_672_048_334_109_06,
    0.083_276_741_576_704_75,
    0.101_930_119_817_240_4,
    0.118_194_531_961_518_4,
    0.131_688_638_449_176_6,
    0.142_096_109_318_382_1,
    0.149_172_986_472_603_7,
    0.152_753_387_130_725_9,
];

/// Upper orthant probability `P(X > h, Y > k)` for standard normals with
/// correlation `r`.
fn bvn_upper(h: f64, k: f64, r: f64) -> f64 {
    if h == f64::INFINITY || k == f64::INFINITY {
        return 0.0;
    }
    if h == f64::NEG_INFINITY {
        return if k == f64::NEG_INFINITY { 1.0 } else { cdf(-k) };
    }
    if k == f64::NEG_INFINITY {
        return cdf(-h);
    }
    if r == 0.0 {
        return cdf(-h) * cdf(-k);
    }

    let (xs, ws): (&[f64], &[f64]) = if r.abs() < 0.3 {
        (&GL6_X, &GL6_W)
    } else if r.abs() < 0.75 {
        (&GL12_X, &GL12_W)
    } else {
        (&GL20_X, &GL20_W)
    };
    // Each half-abscissa x contributes nodes at 1 - x and 1 + x on [0, 2].
    let nodes = || {
        xs.iter()
            .zip(ws)
            .flat_map(|(&x, &w)| [(1.0 - x, w), (1.0 + x, w)])
    };

    let two_pi = 2.0 * PI;
    let mut hk = h * k;
    let mut bvn = 0.0;

    if r.abs() < 0.925 {
        let hs = (h * h + k * k) / 2.0;
        let asr = r.asin() / 2.0;
        for (x, w) in nodes() {
            let sn = (asr * x).sin();
            bvn += w * ((sn * hk - hs) / (1.0 - sn * sn)).exp();
        }
        bvn = bvn * asr / two_pi + cdf(-h) * cdf(-k);
    } else {
        let mut k = k;
        if r < 0.0 {
            k = -k;
            hk = -hk;
        }
        if r.abs() < 1.0 {
            let a_s = (1.0 - r) * (1.0 + r);
            let mut a = a_s.sqrt();
            let bs = (h - k) * (h - k);
            let c = (4.0 - hk) / 8.0;
            let d = (12.0 - hk) / 80.0;
            let asr = -(bs / a_s + hk) / 2.0;
            if asr > -100.0 {
                bvn = a * asr.exp() * (1.0 - c * (bs - a_s) * (1.0 - d * bs) / 3.0 + c * d * a_s * a_s);
            }
            if hk > -100.0 {
                let b = bs.sqrt();
                let sp = two_pi.sqrt() * cdf(-b / a);
                bvn -= (-hk / 2.0).exp() * sp * b * (1.0 - c * bs * (1.0 - d * bs) / 3.0);
            }
            a /= 2.0;
            let mut sum = 0.0;
            for (x, w) in nodes() {
                let xs = (a * x) * (a * x);
                let asr = -(bs / xs + hk) / 2.0;
                if asr > -100.0 {
                    let sp = 1.0 + c * xs * (1.0 + 5.0 * d * xs);
                    let rs = (1.0 - xs).sqrt();
                    let ep = (-(hk / 2.0) * xs / ((1.0 + rs) * (1.0 + rs))).exp() / rs;
                    sum += w * asr.exp() * (sp - ep);
                }
            }
            bvn = (a * sum - bvn) / two_pi;
        }
        if r > 0.0 {
            bvn += cdf(-h.max(k));
        } else if h >= k {
            bvn = -bvn;
        } else {
            let l = if h < 0.0 {
                cdf(k) - cdf(h)
            } else {
                cdf(-h) - cdf(-k)
            };
            bvn = l - bvn;
        }
    }
    bvn.clamp(0.0, 1.0)
}

/// Bivariate standard normal distribution function `P(X <= x, Y <= y)` with
/// correlation `rho` in [-1, 1].
pub fn bivariate_cdf(x: f64, y: f64, rho: f64) -> f64 {
    bvn_upper(-x, -y, rho)
}

#[cfg(test)]
mod tests {
    use super::*;

    // Composite Gauss-Legendre on [lo, hi] with many panels; independent of
    // the Drezner-Wesolowsky transform used above.
    fn integrate(f: impl Fn(f64) -> f64, lo: f64, hi: f64, panels: usize) -> f64 {
        let h = (hi - lo) / panels as f64;
        let mut total = 0.0;
        for p in 0..panels {
            let mid = lo + (p as f64 + 0.5) * h;
            for (&x, &w) in GL20_X.iter().zip(&GL20_W) {
                total += w * (f(mid - 0.5 * h * x) + f(mid + 0.5 * h * x));
            }
        }
        total * 0.5 * h
    }

    // Plackett's identity: dPhi2/drho equals the bivariate density.
    fn bvn_oracle(x: f64, y: f64, rho: f64) -> f64 {
        let density = |r: f64| {
            let s = 1.0 - r * r;
            (-(x * x - 2.0 * r * x * y + y * y) / (2.0 * s)).exp() / (2.0 * PI * s.sqrt())
        };
        cdf(x) * cdf(y) + integrate(density, 0.0, rho, 400)
    }

    #[test]
    fn cdf_reference_values() {
        // Tabulated values of the standard normal distribution.
        let table = [
            (0.0, 0.5),
            (1.0, 0.841_344_746_068_542_9),
            (1.959_963_984_540_054, 0.975),
            (-1.644_853_626_951_472_2, 0.05),
            (-3.0, 0.001_349_898_031_630_094_6),
            (-6.0, 9.865_876_450_376_98e-10),
        ];
        for (x, p) in table {
            assert!((cdf(x) - p).abs() < 1e-14, "Phi({x}) = {} vs {p}", cdf(x));
        }
    }

    #[test]
    fn quantile_inverts_cdf() {
        for i in 1..2000 {
            let p = i as f64 / 2000.0;
            let x = quantile(p);
            assert!((cdf(x) - p).abs() < 1e-12, "p = {p}");
        }
        for p in [1e-300, 1e-20, 1e-10] {
            assert!(((cdf(quantile(p)) - p) / p).abs() < 1e-9, "p = {p}");
        }
        // Upper tail: 1 - 2^-j is exact, so the survival function at the
        // quantile must recover 2^-j.
        for j in [20, 40, 50] {
            let e = 0.5f64.powi(j);
            let upper = quantile(1.0 - e);
            assert!(((cdf(-upper) - e) / e).abs() < 1e-9, "j = {j}");
        }
        assert!((quantile(0.975) - 1.959_963_984_540_054).abs() < 1e-12);
    }

    #[test]
    fn bivariate_origin_closed_form() {
        for rho in [-0.99f64, -0.6, -0.2, 0.0, 0.3, 0.8, 0.95, 0.999] {
            let expect = 0.25 + rho.asin() / (2.0 * PI);
            assert!((bivariate_cdf(0.0, 0.0, rho) - expect).abs() < 1e-14, "rho = {rho}");
        }
    }

    #[test]
    fn bivariate_matches_quadrature() {
        let pts = [-3.0, -1.5, -0.4, 0.0, 0.7, 1.9, 3.2];
        for &rho in &[-0.95, -0.7, -0.3, -0.05, 0.1, 0.5, 0.74, 0.8, 0.93, 0.97] {
            for &x in &pts {
                for &y in &pts {
                    let got = bivariate_cdf(x, y, rho);
                    let want = bvn_oracle(x, y, rho);
                    assert!(
                        (got - want).abs() < 1e-10,
                        "x={x} y={y} rho={rho}: {got} vs {want}"
                    );
                }
            }
        }
    }

    #[test]
    fn bivariate_degenerate_correlations() {
        assert!((bivariate_cdf(0.3, -0.2, 1.0) - cdf(-0.2)).abs() < 1e-14);
        let anti = (cdf(0.3) + cdf(0.5) - 1.0).max(0.0);
        assert!((bivariate_cdf(0.3, 0.5, -1.0) - anti).abs() < 1e-14);
        assert!((bivariate_cdf(8.0, 1.0, 0.6) - cdf(1.0)).abs() < 1e-14);
    }
}
