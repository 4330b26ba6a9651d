use serde::Serialize;

use crate::error::{Error, Result};
use crate::types::EmpiricalDistribution;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EsReport {
    /// `E[S · 1{S ≥ c}]` with the boundary atom prorated so that exactly
    /// mass `α` is counted.
    #[serde(rename = "rho")]
    pub value: f64,
    #[serde(rename = "cutoff_c")]
    pub cutoff: f64,
    /// Share of the mass sitting exactly at the cutoff that is counted.
    pub boundary_fraction: f64,
}

/// Law of the coordinate sum `S = Σ_i X_i`.
pub fn sum_distribution(target: &EmpiricalDistribution) -> Result<EmpiricalDistribution> {
    let sums: Vec<Vec<f64>> = target.atoms().map(|a| vec![a.iter().sum()]).collect();
    EmpiricalDistribution::from_weighted_rows(&sums, target.weights())
}

/// Multivariate expected shortfall at level `α`: the upper-tail mass `α` of
/// the coordinate sum, weighted by its values.
pub fn expected_shortfall_mv(target: &EmpiricalDistribution, alpha: f64) -> Result<EsReport> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::param("alpha", format!("must lie in (0,1), got {alpha}")));
    }
    // ascending, ties merged
    let sums = sum_distribution(target)?;
    let mut above = 0.0;
    let mut value = 0.0;
    for k in (0..sums.len()).rev() {
        let s = sums.atom(k)[0];
        let w = sums.weights()[k];
        if above + w >= alpha || k == 0 {
            let gamma = (alpha - above).max(0.0);
            return Ok(EsReport {
                value: value + gamma * s,
                cutoff: s,
                boundary_fraction: (gamma / w).min(1.0),
            });
        }
        above += w;
        value += w * s;
    }
    unreachable!("sum distribution is nonempty")
}
