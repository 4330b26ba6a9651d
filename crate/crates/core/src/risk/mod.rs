//! Risk measures built on maximal correlation: multivariate expected
//! shortfall, penalized convex measures over finite scenario families, and
//! checkers for the coherence axioms.

mod checks;
mod es;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::gaussian::{max_corr_gaussian, GaussianRisk};
use crate::oracle::{max_corr_1d_quantile, max_corr_assignment, QuantileBaseline};
use crate::transport::{tatonnement, SolveConfig, SolveReport};
use crate::types::{BaselineMeasure, EmpiricalDistribution};

pub use checks::{
    check_comonotone_additivity, check_cone_monotonicity, check_positive_homogeneity,
    check_subadditivity, check_translation_invariance, cone_condition, CheckReport, ConeProbe,
};
pub use es::{expected_shortfall_mv, sum_distribution, EsReport};

/// A risk whose maximal correlation can be evaluated.
#[derive(Debug, Clone, PartialEq)]
pub enum Risk {
    Empirical(EmpiricalDistribution),
    /// `shift + N(0, Σ_X)`.
    Gaussian { shift: Vec<f64>, risk: GaussianRisk },
}

impl From<EmpiricalDistribution> for Risk {
    fn from(d: EmpiricalDistribution) -> Self {
        Risk::Empirical(d)
    }
}

impl From<GaussianRisk> for Risk {
    fn from(risk: GaussianRisk) -> Self {
        Risk::Gaussian {
            shift: vec![0.0; risk.dim()],
            risk,
        }
    }
}

impl Risk {
    pub fn dim(&self) -> usize {
        match self {
            Risk::Empirical(d) => d.dim(),
            Risk::Gaussian { risk, .. } => risk.dim(),
        }
    }

    /// `X + y`.
    pub fn translated(&self, y: &[f64]) -> Result<Risk> {
        if y.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: y.len(),
            });
        }
        Ok(match self {
            Risk::Empirical(d) => Risk::Empirical(d.map_affine(1.0, y)?),
            Risk::Gaussian { shift, risk } => Risk::Gaussian {
                shift: shift.iter().zip(y).map(|(a, b)| a + b).collect(),
                risk: risk.clone(),
            },
        })
    }

    /// `λ X` for `λ > 0`.
    pub fn scaled(&self, lambda: f64) -> Result<Risk> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::param("lambda", format!("must be positive, got {lambda}")));
        }
        Ok(match self {
            Risk::Empirical(d) => Risk::Empirical(d.map_affine(lambda, &vec![0.0; d.dim()])?),
            Risk::Gaussian { shift, risk } => Risk::Gaussian {
                shift: shift.iter().map(|s| lambda * s).collect(),
                risk: GaussianRisk::new(risk.covariance().scaled(lambda * lambda)?)?,
            },
        })
    }
}

/// Evaluates `ρ_μ` for a fixed baseline `μ`.
pub trait RiskSolver {
    fn baseline(&self) -> &BaselineMeasure;
    fn rho(&self, risk: &Risk) -> Result<f64>;
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn gaussian_rho(baseline: &BaselineMeasure, shift: &[f64], risk: &GaussianRisk) -> Result<f64> {
    match baseline {
        BaselineMeasure::Gaussian(g) => {
            if g.covariance().dim() != risk.dim() {
                return Err(Error::DimensionMismatch {
                    expected: g.covariance().dim(),
                    found: risk.dim(),
                });
            }
            Ok(max_corr_gaussian(g.covariance(), risk.covariance())? + dot(&baseline.mean(), shift))
        }
        other => Err(Error::Unsupported(format!(
            "Gaussian risks need a Gaussian baseline, got {}",
            other.name()
        ))),
    }
}

/// Routes each risk to the best available method: the trace-norm formula
/// for Gaussian pairs, the exact quantile integral for Bernoulli baselines,
/// exact assignment for empirical baselines, and semi-discrete transport
/// otherwise.
#[derive(Debug, Clone)]
pub struct MaxCorrelation {
    baseline: BaselineMeasure,
    cfg: SolveConfig,
}

impl MaxCorrelation {
    pub fn new(baseline: BaselineMeasure, cfg: SolveConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self { baseline, cfg })
    }

    pub fn config(&self) -> &SolveConfig {
        &self.cfg
    }

    /// Transport solve that fails on non-convergence.
    pub fn solve(&self, target: &EmpiricalDistribution) -> Result<SolveReport> {
        let report = tatonnement(&self.baseline, target, &self.cfg)?;
        if !report.converged {
            return Err(Error::NotConverged {
                residual: report.residual,
                iterations: report.iterations,
            });
        }
        Ok(report)
    }

    fn rho_empirical(&self, target: &EmpiricalDistribution) -> Result<f64> {
        if target.dim() != self.baseline.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.baseline.dim(),
                found: target.dim(),
            });
        }
        match &self.baseline {
            BaselineMeasure::BernoulliVector { alpha, .. } => {
                // Ũ = (1/α)·1_A·(1, …, 1) only sees the coordinate sum.
                max_corr_1d_quantile(&QuantileBaseline::bernoulli(*alpha)?, &sum_distribution(target)?)
            }
            BaselineMeasure::Empirical(source) => Ok(max_corr_assignment(source, target)?.value),
            _ => Ok(self.solve(target)?.risk_value),
        }
    }
}

impl RiskSolver for MaxCorrelation {
    fn baseline(&self) -> &BaselineMeasure {
        &self.baseline
    }

    fn rho(&self, risk: &Risk) -> Result<f64> {
        match risk {
            Risk::Empirical(d) => self.rho_empirical(d),
            Risk::Gaussian { shift, risk } => gaussian_rho(&self.baseline, shift, risk),
        }
    }
}

/// Exact one-dimensional evaluation by the quantile integral.
#[derive(Debug, Clone)]
pub struct QuantileOracle {
    quantile: QuantileBaseline,
    baseline: BaselineMeasure,
}

impl QuantileOracle {
    pub fn new(quantile: QuantileBaseline) -> Result<Self> {
        let baseline = quantile.to_baseline()?;
        Ok(Self { quantile, baseline })
    }
}

impl RiskSolver for QuantileOracle {
    fn baseline(&self) -> &BaselineMeasure {
        &self.baseline
    }

    fn rho(&self, risk: &Risk) -> Result<f64> {
        match risk {
            Risk::Empirical(d) => max_corr_1d_quantile(&self.quantile, d),
            Risk::Gaussian { shift, risk } => gaussian_rho(&self.baseline, shift, risk),
        }
    }
}

/// Finite family of scenarios `μ_i` with penalties `α_i`.
#[derive(Debug, Clone)]
pub struct ScenarioFamily {
    entries: Vec<(BaselineMeasure, f64)>,
}

impl ScenarioFamily {
    pub fn new(entries: Vec<(BaselineMeasure, f64)>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::Empty("scenario family"));
        }
        for (_, penalty) in &entries {
            if !(penalty.is_finite() && *penalty >= 0.0) {
                return Err(Error::param("penalty", format!("must be finite and >= 0, got {penalty}")));
            }
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[(BaselineMeasure, f64)] {
        &self.entries
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ScenarioOutcome {
    pub baseline: &'static str,
    pub penalty: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvexReport {
    pub value: f64,
    pub attaining_scenario: usize,
    pub scenarios: Vec<ScenarioOutcome>,
}

/// `max_i ρ_{μ_i}(X) - α_i`; scenarios that fail are reported and skipped.
pub fn convex_measure(target: &Risk, family: &ScenarioFamily, cfg: &SolveConfig) -> Result<ConvexReport> {
    let mut best: Option<(f64, usize)> = None;
    let mut first_error = None;
    let mut scenarios = Vec::with_capacity(family.entries.len());
    for (i, (baseline, penalty)) in family.entries.iter().enumerate() {
        let outcome = MaxCorrelation::new(baseline.clone(), cfg.clone()).and_then(|s| s.rho(target));
        match outcome {
            Ok(rho) => {
                let v = rho - penalty;
                if best.is_none_or(|(b, _)| v > b) {
                    best = Some((v, i));
                }
                scenarios.push(ScenarioOutcome {
                    baseline: baseline.name(),
                    penalty: *penalty,
                    rho: Some(rho),
                    error: None,
                });
            }
            Err(e) => {
                scenarios.push(ScenarioOutcome {
                    baseline: baseline.name(),
                    penalty: *penalty,
                    rho: None,
                    error: Some(e.to_string()),
                });
                first_error.get_or_insert(e);
            }
        }
    }
    match best {
        Some((value, attaining_scenario)) => Ok(ConvexReport {
            value,
            attaining_scenario,
            scenarios,
        }),
        None => Err(Error::AllScenariosFailed(Box::new(
            first_error.expect("family is nonempty"),
        ))),
    }
}

/// Finitely generated closed convex cone.
#[derive(Debug, Clone, PartialEq)]
pub struct Cone {
    generators: Vec<Vec<f64>>,
}

impl Cone {
    pub fn new(generators: Vec<Vec<f64>>) -> Result<Self> {
        let Some(first) = generators.first() else {
            return Err(Error::Empty("cone generators"));
        };
        let d = first.len();
        for g in &generators {
            if g.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    found: g.len(),
                });
            }
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::param("generators", "must be finite"));
            }
        }
        if generators.iter().all(|g| g.iter().all(|&v| v == 0.0)) {
            return Err(Error::param("generators", "need at least one nonzero generator"));
        }
        Ok(Self { generators })
    }

    pub fn dim(&self) -> usize {
        self.generators[0].len()
    }

    pub fn generators(&self) -> &[Vec<f64>] {
        &self.generators
    }
}
