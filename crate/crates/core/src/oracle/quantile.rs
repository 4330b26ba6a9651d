//! Exact maximal correlation in dimension one.
//!
//! With `φ` the quantile function of the baseline and `F_X^{-1}` that of the
//! risk, the optimal coupling is the comonotone (sorted) one and
//! `ρ_μ(X) = ∫_0^1 φ(t) F_X^{-1}(t) dt`. For a discrete risk this is a sum
//! of atoms times block integrals of `φ`.

use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::types::{BaselineMeasure, EmpiricalDistribution};

/// Quantile function of a one-dimensional baseline.
#[derive(Debug, Clone, PartialEq)]
pub enum QuantileBaseline {
    /// `φ(t) = t`.
    Uniform,
    /// `φ(t) = σ Φ^{-1}(t)`.
    Gaussian { sigma: f64 },
    /// `φ(t) = 0` on `(0, 1-α)`, `1/α` on `(1-α, 1)`.
    Bernoulli { alpha: f64 },
    /// Step quantile of a discrete baseline.
    Empirical(EmpiricalDistribution),
}

impl QuantileBaseline {
    pub fn gaussian(sigma: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::param("sigma", "must be positive"));
        }
        Ok(Self::Gaussian { sigma })
    }

    pub fn bernoulli(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::param("alpha", format!("must lie in (0,1), got {alpha}")));
        }
        Ok(Self::Bernoulli { alpha })
    }

    pub fn empirical(dist: EmpiricalDistribution) -> Result<Self> {
        if dist.dim() != 1 {
            return Err(Error::DimensionMismatch {
                expected: 1,
                found: dist.dim(),
            });
        }
        Ok(Self::Empirical(dist.canonical()))
    }

    /// One-dimensional view of a baseline measure, when it has one.
    pub fn from_baseline(baseline: &BaselineMeasure) -> Result<Self> {
        if baseline.dim() != 1 {
            return Err(Error::DimensionMismatch {
                expected: 1,
                found: baseline.dim(),
            });
        }
        match baseline {
            BaselineMeasure::UniformCube { .. } => Ok(Self::Uniform),
            BaselineMeasure::Gaussian(g) => Self::gaussian(g.covariance().matrix()[(0, 0)].sqrt()),
            BaselineMeasure::BernoulliVector { alpha, .. } => Self::bernoulli(*alpha),
            BaselineMeasure::Empirical(e) => Self::empirical(e.clone()),
        }
    }

    pub fn to_baseline(&self) -> Result<BaselineMeasure> {
        match self {
            Self::Uniform => BaselineMeasure::uniform_cube(1),
            Self::Gaussian { sigma } => BaselineMeasure::gaussian(
                crate::gaussian::SymmetricPsdMatrix::diagonal(&[sigma * sigma])?,
            ),
            Self::Bernoulli { alpha } => BaselineMeasure::bernoulli(1, *alpha),
            Self::Empirical(e) => Ok(BaselineMeasure::Empirical(e.clone())),
        }
    }

    /// `∫_a^b φ(t) dt` for `0 <= a <= b <= 1`.
    pub fn block_integral(&self, a: f64, b: f64) -> f64 {
        match self {
            Self::Uniform => 0.5 * (b * b - a * a),
            Self::Gaussian { sigma } => {
                // ∫ Φ^{-1}(t) dt = -ϕ(Φ^{-1}(t))
                let std = Normal::standard();
                let dens = |t: f64| {
                    if t <= 0.0 || t >= 1.0 {
                        0.0
                    } else {
                        std.pdf(std.inverse_cdf(t))
                    }
                };
                sigma * (dens(a) - dens(b))
            }
            Self::Bernoulli { alpha } => {
                let lo = a.max(1.0 - alpha);
                if b > lo {
                    (b - lo) / alpha
                } else {
                    0.0
                }
            }
            Self::Empirical(e) => {
                let mut acc = 0.0;
                let mut lo = 0.0;
                let last = e.len() - 1;
                for (k, (atom, w)) in e.atoms().zip(e.weights()).enumerate() {
                    let hi = if k == last { 1.0 } else { lo + w };
                    let overlap = b.min(hi) - a.max(lo);
                    if overlap > 0.0 {
                        acc += atom[0] * overlap;
                    }
                    lo = hi;
                }
                acc
            }
        }
    }
}

/// `∫_0^1 φ(t) F_X^{-1}(t) dt` for a one-dimensional discrete risk.
pub fn max_corr_1d_quantile(baseline: &QuantileBaseline, target: &EmpiricalDistribution) -> Result<f64> {
    if target.dim() != 1 {
        return Err(Error::DimensionMismatch {
            expected: 1,
            found: target.dim(),
        });
    }
    let mut order: Vec<usize> = (0..target.len()).collect();
    order.sort_by(|&a, &b| target.atom(a)[0].total_cmp(&target.atom(b)[0]));
    let mut value = 0.0;
    let mut lo = 0.0;
    let last = order.len() - 1;
    for (pos, &k) in order.iter().enumerate() {
        let hi = if pos == last { 1.0 } else { lo + target.weights()[k] };
        value += target.atom(k)[0] * baseline.block_integral(lo, hi);
        lo = hi;
    }
    Ok(value)
}
