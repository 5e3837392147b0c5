//! Scalar source laws and the interval queries the solvers are built on.
//!
//! Every query accepts infinite endpoints (`f64::INFINITY` / `f64::NEG_INFINITY`)
//! and clips the interval to the support before evaluating it.

use rand::Rng;
use rand_distr::{Exp1, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::erf::{erfc, erfc_inv};

use crate::error::{Error, Result};

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Relative bin width (in units of the source scale) below which conditional
/// moments switch from closed forms to Gauss-Legendre quadrature.
const THIN_BIN_WIDTH: f64 = 1e-3;

const GL_NODES: [f64; 4] = [
    0.183_434_642_495_649_8,
    0.525_532_409_916_329_0,
    0.796_666_477_413_626_7,
    0.960_289_856_497_536_3,
];
const GL_WEIGHTS: [f64; 4] = [
    0.362_683_783_378_362_0,
    0.313_706_645_877_887_3,
    0.222_381_034_453_374_5,
    0.101_228_536_290_376_3,
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SourceModel {
    Uniform { lo: f64, hi: f64 },
    Gaussian { mean: f64, variance: f64 },
    Exponential { rate: f64 },
}

impl SourceModel {
    pub fn uniform(lo: f64, hi: f64) -> Result<Self> {
        Self::Uniform { lo, hi }.validated()
    }

    pub fn gaussian(mean: f64, variance: f64) -> Result<Self> {
        Self::Gaussian { mean, variance }.validated()
    }

    pub fn exponential(rate: f64) -> Result<Self> {
        Self::Exponential { rate }.validated()
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::Uniform { lo, hi } => {
                if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                    return Err(Error::InvalidSource(format!(
                        "uniform bounds must be finite with lo < hi, got [{lo}, {hi}]"
                    )));
                }
            }
            Self::Gaussian { mean, variance } => {
                if !(mean.is_finite() && variance.is_finite() && variance > 0.0) {
                    return Err(Error::InvalidSource(format!(
                        "gaussian needs a finite mean and positive variance, got ({mean}, {variance})"
                    )));
                }
            }
            Self::Exponential { rate } => {
                if !(rate.is_finite() && rate > 0.0) {
                    return Err(Error::InvalidSource(format!(
                        "exponential rate must be positive, got {rate}"
                    )));
                }
            }
        }
        Ok(())
    }

    fn validated(self) -> Result<Self> {
        self.validate().map(|_| self)
    }

    /// Closed support `[lo, hi]`; unbounded ends are infinite.
    pub fn support(&self) -> (f64, f64) {
        match *self {
            Self::Uniform { lo, hi } => (lo, hi),
            Self::Gaussian { .. } => (f64::NEG_INFINITY, f64::INFINITY),
            Self::Exponential { .. } => (0.0, f64::INFINITY),
        }
    }

    /// Characteristic length of the law (standard deviation).
    pub fn scale(&self) -> f64 {
        self.variance().sqrt()
    }

    pub fn mean(&self) -> f64 {
        match *self {
            Self::Uniform { lo, hi } => 0.5 * (lo + hi),
            Self::Gaussian { mean, .. } => mean,
            Self::Exponential { rate } => 1.0 / rate,
        }
    }

    pub fn variance(&self) -> f64 {
        match *self {
            Self::Uniform { lo, hi } => (hi - lo).powi(2) / 12.0,
            Self::Gaussian { variance, .. } => variance,
            Self::Exponential { rate } => 1.0 / (rate * rate),
        }
    }

    /// E[m²].
    pub fn second_moment(&self) -> f64 {
        match *self {
            Self::Uniform { lo, hi } => (lo * lo + lo * hi + hi * hi) / 3.0,
            Self::Gaussian { mean, variance } => variance + mean * mean,
            Self::Exponential { rate } => 2.0 / (rate * rate),
        }
    }

    pub fn density(&self, x: f64) -> f64 {
        match *self {
            Self::Uniform { lo, hi } => {
                if (lo..=hi).contains(&x) {
                    1.0 / (hi - lo)
                } else {
                    0.0
                }
            }
            Self::Gaussian { mean, variance } => {
                let sd = variance.sqrt();
                std_density((x - mean) / sd) / sd
            }
            Self::Exponential { rate } => {
                if x >= 0.0 {
                    rate * (-rate * x).exp()
                } else {
                    0.0
                }
            }
        }
    }

    /// Inverse CDF for `p` in (0, 1).
    pub fn quantile(&self, p: f64) -> f64 {
        match *self {
            Self::Uniform { lo, hi } => lo + p * (hi - lo),
            Self::Gaussian { mean, variance } => {
                mean - variance.sqrt() * std::f64::consts::SQRT_2 * erfc_inv(2.0 * p)
            }
            Self::Exponential { rate } => -(-p).ln_1p() / rate,
        }
    }

    fn clip(&self, lo: f64, hi: f64) -> (f64, f64) {
        let (s_lo, s_hi) = self.support();
        (lo.max(s_lo), hi.min(s_hi))
    }

    /// P(lo ≤ m ≤ hi).
    pub fn interval_mass(&self, lo: f64, hi: f64) -> Result<f64> {
        check_interval(lo, hi)?;
        let (a, b) = self.clip(lo, hi);
        if b <= a {
            return Ok(0.0);
        }
        let mass = match *self {
            Self::Uniform { lo: s_lo, hi: s_hi } => (b - a) / (s_hi - s_lo),
            Self::Gaussian { mean, variance } => {
                let sd = variance.sqrt();
                std_mass((a - mean) / sd, (b - mean) / sd)
            }
            Self::Exponential { rate } => {
                let head = (-rate * a).exp();
                if b.is_infinite() {
                    head
                } else {
                    head * -(-rate * (b - a)).exp_m1()
                }
            }
        };
        Ok(mass.clamp(0.0, 1.0))
    }

    /// E[m | lo ≤ m ≤ hi].
    pub fn interval_mean(&self, lo: f64, hi: f64) -> Result<f64> {
        let (a, b, _) = self.nonempty(lo, hi)?;
        let mean = if self.is_thin(a, b) {
            self.quadrature_moments(a, b).0
        } else {
            match *self {
                Self::Uniform { .. } => 0.5 * (a + b),
                Self::Gaussian { mean, variance } => {
                    let sd = variance.sqrt();
                    let (za, zb) = ((a - mean) / sd, (b - mean) / sd);
                    mean + sd * (std_density(za) - std_density(zb)) / std_mass(za, zb)
                }
                Self::Exponential { rate } => a + exp_shift_mean(rate, b - a),
            }
        };
        Ok(mean.clamp(a, b))
    }

    /// E[m² | lo ≤ m ≤ hi].
    pub fn interval_second_moment(&self, lo: f64, hi: f64) -> Result<f64> {
        let (a, b, _) = self.nonempty(lo, hi)?;
        if self.is_thin(a, b) {
            return Ok(self.quadrature_moments(a, b).1);
        }
        let m2 = match *self {
            Self::Uniform { .. } => (a * a + a * b + b * b) / 3.0,
            Self::Gaussian { mean, variance } => {
                let sd = variance.sqrt();
                let (za, zb) = ((a - mean) / sd, (b - mean) / sd);
                let mass = std_mass(za, zb);
                let z1 = (std_density(za) - std_density(zb)) / mass;
                let z2 = 1.0 + (tail_term(za) - tail_term(zb)) / mass;
                mean * mean + 2.0 * mean * sd * z1 + variance * z2
            }
            Self::Exponential { rate } => {
                let d = b - a;
                let t1 = exp_shift_mean(rate, d);
                let t2 = if d.is_infinite() {
                    2.0 / (rate * rate)
                } else {
                    2.0 / (rate * rate) - (d * d + 2.0 * d / rate) / (rate * d).exp_m1()
                };
                a * a + 2.0 * a * t1 + t2
            }
        };
        Ok(m2.max(0.0))
    }

    /// Var[m | lo ≤ m ≤ hi].
    pub fn interval_variance(&self, lo: f64, hi: f64) -> Result<f64> {
        let mean = self.interval_mean(lo, hi)?;
        let m2 = self.interval_second_moment(lo, hi)?;
        Ok((m2 - mean * mean).max(0.0))
    }

    /// Finds `x` with `interval_mean(lo, x) == target`, if such an `x` exists
    /// inside the support.
    pub fn interval_upper_for_mean(&self, lo: f64, target: f64) -> Option<f64> {
        let (s_lo, s_hi) = self.support();
        let a = lo.max(s_lo);
        if !(target > a) || a >= s_hi {
            return None;
        }
        let ceiling = self.interval_mean(a, s_hi).ok()?;
        if target >= ceiling {
            return None;
        }
        if let Self::Uniform { .. } = self {
            return Some((2.0 * target - a).min(s_hi));
        }
        let mut x_lo = target;
        let mut x_hi = if s_hi.is_finite() {
            s_hi
        } else {
            let mut step = self.scale();
            let mut x = target + step;
            while self.interval_mean(a, x).ok()? <= target {
                step *= 2.0;
                x = target + step;
            }
            x
        };
        for _ in 0..300 {
            let mid = 0.5 * (x_lo + x_hi);
            if mid <= x_lo || mid >= x_hi {
                break;
            }
            if self.interval_mean(a, mid).ok()? < target {
                x_lo = mid;
            } else {
                x_hi = mid;
            }
        }
        Some(0.5 * (x_lo + x_hi))
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            Self::Uniform { lo, hi } => lo + (hi - lo) * rng.random::<f64>(),
            Self::Gaussian { mean, variance } => {
                let z: f64 = rng.sample(StandardNormal);
                mean + variance.sqrt() * z
            }
            Self::Exponential { rate } => {
                let e: f64 = rng.sample(Exp1);
                e / rate
            }
        }
    }

    fn nonempty(&self, lo: f64, hi: f64) -> Result<(f64, f64, f64)> {
        let mass = self.interval_mass(lo, hi)?;
        if !(mass > 0.0) {
            return Err(Error::EmptyBin { lo, hi });
        }
        let (a, b) = self.clip(lo, hi);
        Ok((a, b, mass))
    }

    fn is_thin(&self, a: f64, b: f64) -> bool {
        !matches!(self, Self::Uniform { .. }) && (b - a) < THIN_BIN_WIDTH * self.scale()
    }

    /// (E[m | bin], E[m² | bin]) by 8-point Gauss-Legendre on a finite bin.
    fn quadrature_moments(&self, a: f64, b: f64) -> (f64, f64) {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let (mut w0, mut w1, mut w2) = (0.0, 0.0, 0.0);
        for (node, weight) in GL_NODES.iter().zip(GL_WEIGHTS) {
            for x in [mid - half * node, mid + half * node] {
                let f = weight * self.density(x);
                w0 += f;
                w1 += f * (x - mid);
                w2 += f * (x - mid) * (x - mid);
            }
        }
        let offset = w1 / w0;
        (mid + offset, mid * mid + 2.0 * mid * offset + w2 / w0)
    }
}

fn check_interval(lo: f64, hi: f64) -> Result<()> {
    if lo.is_nan() || hi.is_nan() || lo > hi {
        return Err(Error::InvalidInterval { lo, hi });
    }
    Ok(())
}

fn std_density(z: f64) -> f64 {
    if z.is_infinite() {
        0.0
    } else {
        FRAC_1_SQRT_2PI * (-0.5 * z * z).exp()
    }
}

/// z·φ(z), zero at infinite z.
fn tail_term(z: f64) -> f64 {
    if z.is_infinite() {
        0.0
    } else {
        z * std_density(z)
    }
}

/// Upper tail P(Z > z).
fn std_sf(z: f64) -> f64 {
    if z == f64::INFINITY {
        0.0
    } else if z == f64::NEG_INFINITY {
        1.0
    } else {
        0.5 * erfc(z / std::f64::consts::SQRT_2)
    }
}

/// P(a < Z < b), arranged so each difference is taken between small tails.
fn std_mass(a: f64, b: f64) -> f64 {
    if a >= 0.0 {
        std_sf(a) - std_sf(b)
    } else if b <= 0.0 {
        std_sf(-b) - std_sf(-a)
    } else {
        1.0 - std_sf(-a) - std_sf(b)
    }
}

/// Mean of an exponential truncated to [0, d].
fn exp_shift_mean(rate: f64, d: f64) -> f64 {
    if d.is_infinite() {
        1.0 / rate
    } else {
        1.0 / rate - d / (rate * d).exp_m1()
    }
}
