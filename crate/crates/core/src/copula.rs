//! Copula families with exact samplers and known residual-dependence ground
//! truth.
//!
//! FGM, Frank and AMH are sampled by conditional inversion: draw `u`, draw
//! `w`, and solve `∂C/∂u (u, v) = w` for `v` in closed form. The Gaussian
//! copula goes through the Cholesky factor of its 2x2 correlation matrix.

use std::fmt;
use std::str::FromStr;

use rand::RngCore;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::normal;
use crate::pseudo::BivariateSample;
use crate::rng::open_unit;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    /// Farlie-Gumbel-Morgenstern, `θ ∈ [-1, 1]`.
    Fgm,
    /// Frank, `θ > 0`.
    Frank,
    /// Ali-Mikhail-Haq, `θ ∈ [-1, 1]`.
    Amh,
    /// Gaussian, correlation `θ ∈ (-1, 1)`.
    Gaussian,
}

impl Family {
    pub fn as_str(self) -> &'static str {
        match self {
            Family::Fgm => "fgm",
            Family::Frank => "frank",
            Family::Amh => "amh",
            Family::Gaussian => "gaussian",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "fgm" => Ok(Family::Fgm),
            "frank" => Ok(Family::Frank),
            "amh" => Ok(Family::Amh),
            "gaussian" | "normal" => Ok(Family::Gaussian),
            other => Err(Error::Config(format!("unknown copula family '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct ModelSpec {
    family: Family,
    theta: f64,
}

/// A copula family at a fixed parameter, with the residual dependence index
/// `η` and second-order parameter `τ` of its upper tail where those are
/// known.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ModelSpec", into = "ModelSpec")]
pub struct CopulaModel {
    family: Family,
    theta: f64,
    true_eta: Option<f64>,
    true_tau: Option<f64>,
}

impl TryFrom<ModelSpec> for CopulaModel {
    type Error = Error;

    fn try_from(spec: ModelSpec) -> Result<Self> {
        CopulaModel::new(spec.family, spec.theta)
    }
}

impl From<CopulaModel> for ModelSpec {
    fn from(m: CopulaModel) -> Self {
        ModelSpec {
            family: m.family,
            theta: m.theta,
        }
    }
}

impl CopulaModel {
    pub fn new(family: Family, theta: f64) -> Result<Self> {
        let admissible = match family {
            Family::Fgm | Family::Amh => (-1.0..=1.0).contains(&theta),
            Family::Frank => theta > 0.0 && theta.is_finite(),
            Family::Gaussian => theta > -1.0 && theta < 1.0,
        };
        if !admissible {
            return Err(Error::ParameterDomain(format!("theta = {theta} not admissible for {family}")));
        }
        let (true_eta, true_tau) = match family {
            // At θ = -1 the joint survival is 2t^3 - t^4 instead of O(t^2).
            Family::Fgm if theta > -1.0 => (Some(0.5), Some(0.5)),
            Family::Fgm => (Some(1.0 / 3.0), Some(1.0 / 3.0)),
            Family::Frank => (Some(0.5), Some(0.5)),
            Family::Amh if theta == -1.0 => (Some(1.0 / 3.0), Some(2.0 / 3.0)),
            Family::Amh => (None, None),
            Family::Gaussian => (Some((1.0 + theta) / 2.0), Some(0.0)),
        };
        Ok(Self {
            family,
            theta,
            true_eta,
            true_tau,
        })
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn true_eta(&self) -> Option<f64> {
        self.true_eta
    }

    pub fn true_tau(&self) -> Option<f64> {
        self.true_tau
    }

    /// Copula distribution function `C_θ(u, v)` on `[0, 1]²`.
    pub fn cdf(&self, u: f64, v: f64) -> f64 {
        let th = self.theta;
        match self.family {
            Family::Fgm => u * v * (1.0 + th * (1.0 - u) * (1.0 - v)),
            Family::Frank => {
                let num = (-th * u).exp_m1() * (-th * v).exp_m1();
                -(num / (-th).exp_m1()).ln_1p() / th
            }
            Family::Amh => u * v / (1.0 - th * (1.0 - u) * (1.0 - v)),
            Family::Gaussian => normal::bivariate_cdf(normal::quantile(u), normal::quantile(v), th),
        }
    }

    /// Solve `∂C/∂u (u, v) = w` for `v`.
    fn conditional_inverse(&self, u: f64, w: f64) -> f64 {
        let th = self.theta;
        match self.family {
            Family::Fgm => {
                // v + A v (1 - v) = w, A = θ(1 - 2u); stable root of the quadratic.
                let a = th * (1.0 - 2.0 * u);
                let b = 1.0 + a;
                2.0 * w / (b + (b * b - 4.0 * a * w).sqrt())
            }
            Family::Frank => {
                let ratio = w * (-th).exp_m1() / (w + (1.0 - w) * (-th * u).exp());
                -ratio.ln_1p() / th
            }
            Family::Amh => {
                // v (1 - θ + θ v) = w (α + β v)², α = 1 - θ(1-u), β = θ(1-u).
                let s = 1.0 - u;
                let alpha = 1.0 - th * s;
                let beta = th * s;
                let qa = th - w * beta * beta;
                let qb = (1.0 - th) - 2.0 * w * alpha * beta;
                let qc = w * alpha * alpha;
                let disc = (qb * qb + 4.0 * qa * qc).max(0.0);
                2.0 * qc / (qb + disc.sqrt())
            }
            Family::Gaussian => unreachable!("Gaussian copula is sampled through its Cholesky factor"),
        }
    }

    fn draw_pair<R: RngCore + ?Sized>(&self, rng: &mut R) -> (f64, f64) {
        let u = open_unit(rng);
        let w = open_unit(rng);
        let v = match self.family {
            Family::Gaussian => {
                let z1 = normal::quantile(u);
                let z2 = normal::quantile(w);
                let th = self.theta;
                normal::cdf(th * z1 + ((1.0 - th) * (1.0 + th)).sqrt() * z2)
            }
            _ => self.conditional_inverse(u, w),
        };
        (u, v.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0))
    }

    /// `n` pairs drawn from the copula using `rng`.
    pub fn sample_with<R: RngCore + ?Sized>(&self, n: usize, rng: &mut R) -> Result<BivariateSample> {
        if n < 2 {
            return Err(Error::ParameterDomain(format!("sample size must be at least 2, got {n}")));
        }
        let (u, v) = (0..n).map(|_| self.draw_pair(rng)).unzip();
        BivariateSample::new(u, v)
    }

    /// `n` pairs drawn from the copula; bit-identical for identical seeds.
    pub fn sample(&self, n: usize, seed: u64) -> Result<BivariateSample> {
        self.sample_with(n, &mut ChaCha8Rng::seed_from_u64(seed))
    }
}

impl fmt::Display for CopulaModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(θ={})", self.family, self.theta)
    }
}
