use rand_distr::{Distribution, StandardNormal};
use rand::Rng;
use serde::Serialize;

use super::{MaxCorrelation, Risk, RiskSolver, Cone};
use crate::error::{Error, Result};
use crate::oracle::max_corr_rows;
use crate::sampling::{sample_baseline, stream_rng};
use crate::transport::assign_atoms;
use crate::types::{BaselineMeasure, EmpiricalDistribution};

/// Verdict of one axiom check, `passed` iff `gap <= tolerance`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckReport {
    pub name: String,
    pub passed: bool,
    pub lhs: f64,
    pub rhs: f64,
    pub gap: f64,
    pub tolerance: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

impl CheckReport {
    pub fn new(name: impl Into<String>, lhs: f64, rhs: f64, gap: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            passed: gap <= tolerance,
            lhs,
            rhs,
            gap,
            tolerance,
            detail: None,
        }
    }

    pub fn with_detail(mut self, detail: impl Into<String>) -> Self {
        self.detail = Some(detail.into());
        self
    }
}

fn positive_tol(tol: f64) -> Result<()> {
    if tol > 0.0 && tol.is_finite() {
        Ok(())
    } else {
        Err(Error::param("tol", format!("must be positive, got {tol}")))
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `ρ(X + m y)` against `ρ(X) + m ⟨ū, y⟩`.
pub fn check_translation_invariance(
    solver: &dyn RiskSolver,
    target: &Risk,
    y: &[f64],
    m: f64,
    tol: f64,
) -> Result<CheckReport> {
    positive_tol(tol)?;
    let shift: Vec<f64> = y.iter().map(|v| m * v).collect();
    let lhs = solver.rho(&target.translated(&shift)?)?;
    let rhs = solver.rho(target)? + m * dot(&solver.baseline().mean(), y);
    Ok(CheckReport::new("translation_invariance", lhs, rhs, (lhs - rhs).abs(), tol))
}

/// `ρ(λ X)` against `λ ρ(X)`.
pub fn check_positive_homogeneity(
    solver: &dyn RiskSolver,
    target: &Risk,
    lambda: f64,
    tol: f64,
) -> Result<CheckReport> {
    positive_tol(tol)?;
    let scaled = target.scaled(lambda)?;
    let lhs = solver.rho(&scaled)?;
    let rhs = lambda * solver.rho(target)?;
    Ok(CheckReport::new("positive_homogeneity", lhs, rhs, (lhs - rhs).abs(), tol))
}

/// `ρ(X + Y) <= ρ(X) + ρ(Y)` for the joint law given by paired rows.
pub fn check_subadditivity(
    solver: &dyn RiskSolver,
    x_rows: &[Vec<f64>],
    y_rows: &[Vec<f64>],
    tol: f64,
) -> Result<CheckReport> {
    positive_tol(tol)?;
    if x_rows.len() != y_rows.len() {
        return Err(Error::param(
            "rows",
            format!("{} rows of X paired with {} rows of Y", x_rows.len(), y_rows.len()),
        ));
    }
    let mut sum = Vec::with_capacity(x_rows.len());
    for (x, y) in x_rows.iter().zip(y_rows) {
        if x.len() != y.len() {
            return Err(Error::DimensionMismatch {
                expected: x.len(),
                found: y.len(),
            });
        }
        sum.push(x.iter().zip(y).map(|(a, b)| a + b).collect::<Vec<f64>>());
    }
    let rho = |rows: &[Vec<f64>]| -> Result<f64> {
        solver.rho(&Risk::Empirical(EmpiricalDistribution::from_samples(rows)?))
    };
    let lhs = rho(&sum)?;
    let rhs = rho(x_rows)? + rho(y_rows)?;
    Ok(CheckReport::new("subadditivity", lhs, rhs, lhs - rhs, tol))
}

/// Whether every generator `g` satisfies `⟨g, u⟩ >= 0` on the support of the
/// baseline; on failure, the index of the first offending generator.
pub fn cone_condition(baseline: &BaselineMeasure, cone: &Cone) -> Result<Option<usize>> {
    if baseline.dim() != cone.dim() {
        return Err(Error::DimensionMismatch {
            expected: baseline.dim(),
            found: cone.dim(),
        });
    }
    let bad = cone.generators().iter().position(|g| match baseline {
        // corners of [0,1]^d
        BaselineMeasure::UniformCube { .. } => g.iter().any(|&v| v < 0.0),
        // full support: only the zero vector is admissible
        BaselineMeasure::Gaussian(_) => g.iter().any(|&v| v != 0.0),
        // support {0, (1/α)·1}
        BaselineMeasure::BernoulliVector { .. } => g.iter().sum::<f64>() < 0.0,
        BaselineMeasure::Empirical(e) => e.atoms().any(|u| dot(g, u) < 0.0),
    });
    Ok(bad)
}

#[derive(Debug, Clone, Serialize)]
pub struct ConeProbe {
    pub condition_holds: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub violating_generator: Option<usize>,
    /// Empirical probe, run only when the condition holds.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub probe: Option<CheckReport>,
}

const PROBE_ROWS: usize = 8;

/// Cone condition plus a randomized probe of `ρ(X + Z) >= ρ(X)` for
/// `Z` taking values in the cone, evaluated exactly against an 8-point
/// sample of the baseline.
pub fn check_cone_monotonicity(
    baseline: &BaselineMeasure,
    cone: &Cone,
    trials: usize,
    seed: u64,
    tol: f64,
) -> Result<ConeProbe> {
    positive_tol(tol)?;
    let bad = cone_condition(baseline, cone)?;
    if bad.is_some() {
        return Ok(ConeProbe {
            condition_holds: false,
            violating_generator: bad,
            probe: None,
        });
    }
    let d = cone.dim();
    let source = sample_baseline(baseline, PROBE_ROWS, seed)?.to_rows();
    let src: Vec<&[f64]> = source.iter().map(Vec::as_slice).collect();
    let mut rng = stream_rng(seed, 1);
    let mut worst = f64::INFINITY;
    let mut worst_pair = (0.0, 0.0);
    for _ in 0..trials.max(1) {
        let x: Vec<Vec<f64>> = (0..PROBE_ROWS)
            .map(|_| (0..d).map(|_| StandardNormal.sample(&mut rng)).collect())
            .collect();
        let shifted: Vec<Vec<f64>> = x
            .iter()
            .map(|row| {
                let mut r = row.clone();
                for g in cone.generators() {
                    let c: f64 = rng.random();
                    r.iter_mut().zip(g).for_each(|(v, gi)| *v += c * gi);
                }
                r
            })
            .collect();
        let xr: Vec<&[f64]> = x.iter().map(Vec::as_slice).collect();
        let sr: Vec<&[f64]> = shifted.iter().map(Vec::as_slice).collect();
        let before = max_corr_rows(&src, &xr)?.value;
        let after = max_corr_rows(&src, &sr)?.value;
        if after - before < worst {
            worst = after - before;
            worst_pair = (after, before);
        }
    }
    Ok(ConeProbe {
        condition_holds: true,
        violating_generator: None,
        probe: Some(CheckReport::new(
            "cone_monotonicity_probe",
            worst_pair.0,
            worst_pair.1,
            (-worst).max(0.0),
            tol,
        )),
    })
}

/// Builds the comonotone pair from one shared baseline sample and compares
/// `ρ(X + Y)` with `ρ(X) + ρ(Y)`.
pub fn check_comonotone_additivity(
    solver: &MaxCorrelation,
    p: &EmpiricalDistribution,
    q: &EmpiricalDistribution,
    tol: f64,
) -> Result<CheckReport> {
    positive_tol(tol)?;
    let baseline = solver.baseline();
    if !baseline.is_continuous() {
        return Err(Error::Unsupported(format!(
            "comonotone construction needs a continuous baseline, got {}",
            baseline.name()
        )));
    }
    if p.dim() != q.dim() {
        return Err(Error::DimensionMismatch {
            expected: p.dim(),
            found: q.dim(),
        });
    }
    let rp = solver.solve(p)?;
    let rq = solver.solve(q)?;
    let cfg = solver.config();
    let cloud = sample_baseline(baseline, cfg.sample_count, cfg.seed)?;
    let ap = assign_atoms(&rp.weights, p, &cloud)?;
    let aq = assign_atoms(&rq.weights, q, &cloud)?;
    let rows: Vec<Vec<f64>> = ap
        .iter()
        .zip(&aq)
        .map(|(&i, &k)| p.atom(i).iter().zip(q.atom(k)).map(|(a, b)| a + b).collect())
        .collect();
    let sum = EmpiricalDistribution::from_samples(&rows)?;
    let lhs = solver.solve(&sum)?.risk_value;
    let rhs = rp.risk_value + rq.risk_value;
    Ok(CheckReport::new("comonotone_additivity", lhs, rhs, (lhs - rhs).abs(), tol)
        .with_detail(format!("{} atoms in the comonotone sum", sum.len())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::{comonotone_cross_cov, max_corr_gaussian, sample_covariance, SymmetricPsdMatrix};
    use crate::oracle::{max_corr_1d_quantile, QuantileBaseline};
    use crate::risk::QuantileOracle;
    use crate::transport::SolveConfig;
    use crate::types::validate_empirical;

    fn two_atoms() -> EmpiricalDistribution {
        validate_empirical(vec![vec![0.0], vec![1.0]], vec![0.5, 0.5]).unwrap()
    }

    fn cfg(n: usize) -> SolveConfig {
        SolveConfig {
            sample_count: n,
            ..Default::default()
        }
    }

    #[test]
    fn translation_examples() {
        let q = QuantileOracle::new(QuantileBaseline::Uniform).unwrap();
        let x = Risk::from(two_atoms());
        let r = check_translation_invariance(&q, &x, &[1.0], 0.0, 1e-12).unwrap();
        assert_eq!(r.gap, 0.0);
        let r = check_translation_invariance(&q, &x, &[1.0], 2.0, 1e-12).unwrap();
        assert!(r.passed);
        assert_eq!(r.lhs, 1.375);

        let g = MaxCorrelation::new(BaselineMeasure::standard_gaussian(2).unwrap(), cfg(1000)).unwrap();
        let gx = Risk::from(crate::gaussian::GaussianRisk::new(SymmetricPsdMatrix::identity(2)).unwrap());
        let r = check_translation_invariance(&g, &gx, &[1.0, -3.0], 4.0, 1e-12).unwrap();
        assert_eq!(r.gap, 0.0);
    }

    #[test]
    fn homogeneity_examples() {
        let q = QuantileOracle::new(QuantileBaseline::Uniform).unwrap();
        let x = Risk::from(two_atoms());
        assert_eq!(check_positive_homogeneity(&q, &x, 1.0, 1e-12).unwrap().gap, 0.0);
        let r = check_positive_homogeneity(&q, &x, 2.0, 1e-12).unwrap();
        assert_eq!((r.lhs, r.rhs), (0.75, 0.75));
        assert!(check_positive_homogeneity(&q, &x, 0.0, 1e-12).is_err());
        let g = MaxCorrelation::new(BaselineMeasure::standard_gaussian(2).unwrap(), cfg(1000)).unwrap();
        let gx = Risk::from(
            crate::gaussian::GaussianRisk::new(SymmetricPsdMatrix::diagonal(&[1.0, 4.0]).unwrap()).unwrap(),
        );
        let r = check_positive_homogeneity(&g, &gx, 3.0, 1e-10).unwrap();
        assert!(r.passed && (r.lhs - 9.0).abs() < 1e-10);
    }

    #[test]
    fn subadditivity_examples() {
        let q = QuantileOracle::new(QuantileBaseline::Uniform).unwrap();
        let x = vec![vec![0.3], vec![-1.0], vec![2.0], vec![0.7]];
        let r = check_subadditivity(&q, &x, &x, 1e-12).unwrap();
        assert!(r.passed && r.gap.abs() < 1e-12);
        let neg: Vec<Vec<f64>> = x.iter().map(|r| vec![-r[0]]).collect();
        let r = check_subadditivity(&q, &x, &neg, 1e-12).unwrap();
        assert_eq!(r.lhs, 0.0);
        assert!(r.passed);
        assert!(check_subadditivity(&q, &x, &x[..3], 1e-12).is_err());
    }

    #[test]
    fn subadditivity_random_gaussian_pairs() {
        let s = MaxCorrelation::new(BaselineMeasure::uniform_cube(2).unwrap(), cfg(20_000)).unwrap();
        let rows = sample_baseline(&BaselineMeasure::standard_gaussian(4).unwrap(), 12, 3)
            .unwrap()
            .to_rows();
        let x: Vec<Vec<f64>> = rows.iter().map(|r| r[..2].to_vec()).collect();
        let y: Vec<Vec<f64>> = rows.iter().map(|r| r[2..].to_vec()).collect();
        let r = check_subadditivity(&s, &x, &y, 0.02).unwrap();
        assert!(r.passed, "{r:?}");
    }

    #[test]
    fn cone_examples() {
        let cube = BaselineMeasure::uniform_cube(2).unwrap();
        let orthant = Cone::new(vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let r = check_cone_monotonicity(&cube, &orthant, 20, 1, 1e-12).unwrap();
        assert!(r.condition_holds);
        assert!(r.probe.unwrap().passed);
        let left = Cone::new(vec![vec![-1.0, 0.0]]).unwrap();
        let r = check_cone_monotonicity(&cube, &left, 20, 1, 1e-12).unwrap();
        assert!(!r.condition_holds && r.violating_generator == Some(0));
        let g = BaselineMeasure::standard_gaussian(2).unwrap();
        let r = check_cone_monotonicity(&g, &Cone::new(vec![vec![1.0, 0.0]]).unwrap(), 5, 1, 1e-12).unwrap();
        assert!(!r.condition_holds);
        let b = BaselineMeasure::bernoulli(2, 0.3).unwrap();
        assert_eq!(cone_condition(&b, &Cone::new(vec![vec![2.0, -1.0]]).unwrap()).unwrap(), None);
        assert!(cone_condition(&cube, &Cone::new(vec![vec![1.0]]).unwrap()).is_err());
    }

    #[test]
    fn comonotone_with_point_mass() {
        let s = MaxCorrelation::new(BaselineMeasure::uniform_cube(2).unwrap(), cfg(20_000)).unwrap();
        let p = validate_empirical(
            vec![vec![0.2, 0.1], vec![0.8, 0.4], vec![0.5, 0.9]],
            vec![0.3, 0.3, 0.4],
        )
        .unwrap();
        let q = validate_empirical(vec![vec![1.0, -2.0]], vec![1.0]).unwrap();
        // sum weights are the sampled cell masses, so only MC accuracy applies
        let r = check_comonotone_additivity(&s, &p, &q, 5e-3).unwrap();
        assert!(r.passed, "{r:?}");
    }

    #[test]
    fn comonotone_one_dimensional_sorted_sum() {
        let s = MaxCorrelation::new(BaselineMeasure::uniform_cube(1).unwrap(), cfg(50_000)).unwrap();
        let p = validate_empirical(vec![vec![0.0], vec![1.0]], vec![0.5, 0.5]).unwrap();
        let q = validate_empirical(vec![vec![-1.0], vec![3.0]], vec![0.7, 0.3]).unwrap();
        let r = check_comonotone_additivity(&s, &p, &q, 0.02).unwrap();
        assert!(r.passed, "{r:?}");
        // sorted quantile sum: atoms -1, 0, 4 on blocks (0,.5), (.5,.7), (.7,1)
        let sorted = validate_empirical(vec![vec![-1.0], vec![0.0], vec![4.0]], vec![0.5, 0.2, 0.3]).unwrap();
        let exact = max_corr_1d_quantile(&QuantileBaseline::Uniform, &sorted).unwrap();
        assert!((r.lhs - exact).abs() < 0.02, "{} vs {exact}", r.lhs);
    }

    #[test]
    fn comonotone_gaussian_samples_match_closed_form() {
        let s = MaxCorrelation::new(BaselineMeasure::standard_gaussian(2).unwrap(), cfg(20_000)).unwrap();
        let g = BaselineMeasure::standard_gaussian(2).unwrap();
        let p_rows: Vec<Vec<f64>> = sample_baseline(&g, 80, 11)
            .unwrap()
            .to_rows()
            .into_iter()
            .map(|r| vec![r[0], 2.0 * r[1] + 0.5 * r[0]])
            .collect();
        let q_rows: Vec<Vec<f64>> = sample_baseline(&g, 80, 12)
            .unwrap()
            .to_rows()
            .into_iter()
            .map(|r| vec![1.5 * r[0] - 0.3 * r[1], 0.7 * r[1]])
            .collect();
        let p = EmpiricalDistribution::from_samples(&p_rows).unwrap();
        let q = EmpiricalDistribution::from_samples(&q_rows).unwrap();
        let r = check_comonotone_additivity(&s, &p, &q, 0.05 * 4.0).unwrap();
        assert!(r.passed, "{r:?}");
        // closed-form comonotone sum of the fitted Gaussians
        let su = SymmetricPsdMatrix::identity(2);
        let sx = sample_covariance(&p_rows).unwrap();
        let sy = sample_covariance(&q_rows).unwrap();
        let m = comonotone_cross_cov(&su, &sx, &sy).unwrap();
        let sum = sx.matrix() + sy.matrix() + &m + m.transpose();
        let closed = max_corr_gaussian(&su, &SymmetricPsdMatrix::new(sum).unwrap()).unwrap();
        let expected = max_corr_gaussian(&su, &sx).unwrap() + max_corr_gaussian(&su, &sy).unwrap();
        assert!((closed - expected).abs() < 1e-8);
        assert!((r.lhs - closed).abs() < 0.05 * closed, "{} vs {closed}", r.lhs);
    }

    #[test]
    fn comonotone_needs_continuous_baseline() {
        let s = MaxCorrelation::new(BaselineMeasure::bernoulli(1, 0.5).unwrap(), cfg(1000)).unwrap();
        assert!(matches!(
            check_comonotone_additivity(&s, &two_atoms(), &two_atoms(), 0.1),
            Err(Error::Unsupported(_))
        ));
    }
}
