//! Bounded per-node noise families.
//!
//! Every family carries an exact closed-form mean so the noise-mean vector
//! of an instance is always consistent with its sampling distribution.

use rand::Rng;

use crate::error::{Error, Result};

/// A bounded noise distribution for one node.
#[derive(Debug, Clone, PartialEq)]
pub enum NoiseSpec {
    /// Uniform on `[lo, hi]`.
    Uniform { lo: f64, hi: f64 },
    /// Gaussian with the given mean and standard deviation, resampled until
    /// the draw lands in `[mean - halfwidth, mean + halfwidth]`. The symmetric
    /// window keeps the exact mean equal to `mean`.
    TruncatedGaussian {
        mean: f64,
        sd: f64,
        halfwidth: f64,
    },
    /// Degenerate point mass at `c`.
    Constant { c: f64 },
}

impl NoiseSpec {
    /// Exact mean of the distribution.
    pub fn mean(&self) -> f64 {
        match *self {
            NoiseSpec::Uniform { lo, hi } => 0.5 * (lo + hi),
            NoiseSpec::TruncatedGaussian { mean, .. } => mean,
            NoiseSpec::Constant { c } => c,
        }
    }

    /// Smallest `b` with the support contained in `[-b, b]`.
    pub fn support_bound(&self) -> f64 {
        match *self {
            NoiseSpec::Uniform { lo, hi } => lo.abs().max(hi.abs()),
            NoiseSpec::TruncatedGaussian { mean, halfwidth, .. } => mean.abs() + halfwidth,
            NoiseSpec::Constant { c } => c.abs(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            NoiseSpec::Uniform { lo, hi } => {
                if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                    return Err(Error::InvalidParameter(format!(
                        "uniform noise needs lo <= hi, got [{lo}, {hi}]"
                    )));
                }
            }
            NoiseSpec::TruncatedGaussian { mean, sd, halfwidth } => {
                if !(mean.is_finite() && sd.is_finite() && sd > 0.0) {
                    return Err(Error::InvalidParameter(format!(
                        "truncated gaussian needs finite mean and sd > 0, got mean {mean}, sd {sd}"
                    )));
                }
                if !(halfwidth.is_finite() && halfwidth > 0.0) {
                    return Err(Error::InvalidParameter(format!(
                        "truncated gaussian needs halfwidth > 0, got {halfwidth}"
                    )));
                }
            }
            NoiseSpec::Constant { c } => {
                if !c.is_finite() {
                    return Err(Error::InvalidParameter("constant noise must be finite".into()));
                }
            }
        }
        Ok(())
    }

    /// One draw. Deterministic given the RNG state.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            NoiseSpec::Uniform { lo, hi } => rng.gen_range(lo..=hi),
            NoiseSpec::TruncatedGaussian { mean, sd, halfwidth } => loop {
                // Box-Muller keeps us independent of distribution crates and
                // bit-reproducible across platforms.
                let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
                let u2: f64 = rng.gen_range(0.0..1.0);
                let z = (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos();
                let value = mean + sd * z;
                if (value - mean).abs() <= halfwidth {
                    return value;
                }
            },
            NoiseSpec::Constant { c } => c,
        }
    }
}
