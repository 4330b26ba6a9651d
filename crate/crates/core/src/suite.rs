//! Randomized property suites over generated instances, each check
//! reporting its gap against a fixed tolerance.
//!
//! Tolerances (before `tolerance_scale` is applied):
//!
//! | suite    | check                               | tolerance                      |
//! |----------|-------------------------------------|--------------------------------|
//! | gaussian | d=2 trace formula                   | 1e-10                          |
//! | gaussian | push-forward `A Σ_U A = Σ_X`        | 1e-8 relative                  |
//! | gaussian | comonotone additivity               | 1e-8 relative                  |
//! | gaussian | homogeneity, translation            | 1e-10 relative                 |
//! | oracle   | exhaustive vs assignment            | 0 (exact)                      |
//! | oracle   | assignment vs 1D quantile           | 1e-10                          |
//! | oracle   | ES vs Bernoulli quantile            | 1e-10                          |
//! | oracle   | rearrangement probe                 | 1e-10                          |
//! | axioms   | exact 1D translation, homogeneity   | 1e-12                          |
//! | axioms   | transport translation               | `4 m ‖y‖ √(d/12) / √N + 1e-9`  |
//! | axioms   | transport homogeneity               | `0.02 λ`                       |
//! | axioms   | transport subadditivity             | 0.01                           |
//! | axioms   | cone monotonicity probe             | 1e-12                          |
//! | axioms   | law invariance                      | 0 (bit-exact)                  |

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::gaussian::{
    brenier_map_gaussian, comonotone_cross_cov, max_corr_gaussian, push_forward_residual,
    GaussianRisk, SymmetricPsdMatrix,
};
use crate::oracle::{
    max_assignment, max_assignment_exhaustive, max_corr_1d_quantile, max_corr_rows,
    permutation_value, profit_table, structure_neutrality_probe, QuantileBaseline,
};
use crate::risk::{
    check_cone_monotonicity, check_positive_homogeneity, check_subadditivity,
    check_translation_invariance, expected_shortfall_mv, sum_distribution, CheckReport, Cone,
    MaxCorrelation, QuantileOracle, Risk, RiskSolver,
};
use crate::sampling::stream_rng;
use crate::transport::SolveConfig;
use crate::types::{validate_empirical, BaselineMeasure, EmpiricalDistribution};

/// Baseline sample size used by the transport-backed axiom checks.
pub const AXIOM_SAMPLE_COUNT: usize = 20_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SuiteKind {
    Axioms,
    Oracle,
    Gaussian,
}

impl FromStr for SuiteKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "axioms" => Ok(Self::Axioms),
            "oracle" => Ok(Self::Oracle),
            "gaussian" => Ok(Self::Gaussian),
            other => Err(Error::param("suite", format!("unknown suite {other:?}"))),
        }
    }
}

impl fmt::Display for SuiteKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Axioms => "axioms",
            Self::Oracle => "oracle",
            Self::Gaussian => "gaussian",
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SuiteReport {
    pub suite: SuiteKind,
    pub seed: u64,
    pub trials: usize,
    pub passed: bool,
    pub checks: Vec<CheckReport>,
}

/// Runs `trials` generated instances of the chosen suite. Every tolerance
/// is multiplied by `tolerance_scale`.
pub fn run_suite(kind: SuiteKind, seed: u64, trials: usize, tolerance_scale: f64) -> Result<SuiteReport> {
    if trials == 0 {
        return Err(Error::param("trials", "must be positive"));
    }
    if !tolerance_scale.is_finite() {
        return Err(Error::param("tolerance_scale", "must be finite"));
    }
    let mut rng = stream_rng(seed, 0x5u64 << 32);
    let mut checks = Vec::new();
    for t in 0..trials {
        let mut out = match kind {
            SuiteKind::Gaussian => gaussian_trial(&mut rng, tolerance_scale)?,
            SuiteKind::Oracle => oracle_trial(&mut rng, seed.wrapping_add(t as u64), tolerance_scale)?,
            SuiteKind::Axioms => axioms_trial(&mut rng, seed.wrapping_add(t as u64), tolerance_scale)?,
        };
        for c in &mut out {
            c.name = format!("{}[{t}]", c.name);
        }
        checks.extend(out);
    }
    Ok(SuiteReport {
        suite: kind,
        seed,
        trials,
        passed: checks.iter().all(|c| c.passed),
        checks,
    })
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// `B Bᵀ + 0.1 I` with standard normal `B`.
pub fn random_pd(rng: &mut ChaCha8Rng, d: usize) -> SymmetricPsdMatrix {
    let b = DMatrix::from_fn(d, d, |_, _| normal(rng));
    let m = &b * b.transpose() + DMatrix::identity(d, d) * 0.1;
    SymmetricPsdMatrix::new(m).expect("B Bᵀ + 0.1 I is positive definite")
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}

fn gaussian_trial(rng: &mut ChaCha8Rng, scale: f64) -> Result<Vec<CheckReport>> {
    let mut out = Vec::new();

    let (s1, s2) = (rng.random_range(0.1..3.0), rng.random_range(0.1..3.0));
    let r: f64 = rng.random_range(-0.99..0.99);
    let sx = SymmetricPsdMatrix::from_rows(&[vec![s1 * s1, r * s1 * s2], vec![r * s1 * s2, s2 * s2]])?;
    let lhs = max_corr_gaussian(&SymmetricPsdMatrix::identity(2), &sx)?;
    let rhs = (s1 * s1 + s2 * s2 + 2.0 * s1 * s2 * (1.0 - r * r).sqrt()).sqrt();
    out.push(CheckReport::new("gaussian_d2_formula", lhs, rhs, (lhs - rhs).abs(), 1e-10 * scale));

    let d = rng.random_range(2..=4);
    let su = random_pd(rng, d);
    let sx = random_pd(rng, d);
    let sy = random_pd(rng, d);
    let a = brenier_map_gaussian(&su, &sx)?;
    out.push(CheckReport::new("push_forward", 0.0, 0.0, push_forward_residual(&a, &su, &sx), 1e-8 * scale));

    let m = comonotone_cross_cov(&su, &sx, &sy)?;
    let sum = SymmetricPsdMatrix::new(sx.matrix() + sy.matrix() + &m + m.transpose())?;
    let lhs = max_corr_gaussian(&su, &sum)?;
    let rhs = max_corr_gaussian(&su, &sx)? + max_corr_gaussian(&su, &sy)?;
    out.push(CheckReport::new("comonotone_additivity", lhs, rhs, rel(lhs, rhs), 1e-8 * scale));

    let solver = MaxCorrelation::new(BaselineMeasure::gaussian(su)?, SolveConfig::default())?;
    let x = Risk::from(GaussianRisk::new(sx)?);
    let lambda = rng.random_range(0.1..5.0);
    let mut h = check_positive_homogeneity(&solver, &x, lambda, 1.0)?;
    h.gap = rel(h.lhs, h.rhs);
    h.tolerance = 1e-10 * scale;
    h.passed = h.gap <= h.tolerance;
    out.push(h);
    let y: Vec<f64> = (0..d).map(|_| normal(rng)).collect();
    let mut tr = check_translation_invariance(&solver, &x, &y, rng.random_range(-3.0..3.0), 1.0)?;
    tr.gap = rel(tr.lhs, tr.rhs);
    tr.tolerance = 1e-10 * scale;
    tr.passed = tr.gap <= tr.tolerance;
    out.push(tr);
    Ok(out)
}

fn random_rows(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Vec<Vec<f64>> {
    (0..n).map(|_| (0..d).map(|_| normal(rng)).collect()).collect()
}

fn random_discrete(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Result<EmpiricalDistribution> {
    let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..1.0)).collect();
    let total: f64 = raw.iter().sum();
    validate_empirical(random_rows(rng, n, d), raw.iter().map(|w| w / total).collect())
}

fn oracle_trial(rng: &mut ChaCha8Rng, seed: u64, scale: f64) -> Result<Vec<CheckReport>> {
    let mut out = Vec::new();

    let n = rng.random_range(2..=7);
    let a = random_rows(rng, n, 2);
    let b = random_rows(rng, n, 2);
    let ar: Vec<&[f64]> = a.iter().map(Vec::as_slice).collect();
    let br: Vec<&[f64]> = b.iter().map(Vec::as_slice).collect();
    let profit = profit_table(&ar, &br);
    let (lhs, _) = max_assignment_exhaustive(&profit, n);
    let rhs = permutation_value(&profit, &max_assignment(&profit, n, n));
    out.push(CheckReport::new("exhaustive_vs_assignment", lhs, rhs, (lhs - rhs).abs(), 0.0));

    // equal-weight grid baseline against a sample of the same size
    let m = rng.random_range(2..=9);
    let grid: Vec<Vec<f64>> = (0..m).map(|i| vec![(i as f64 + 0.5) / m as f64]).collect();
    let sample = random_rows(rng, m, 1);
    let gr: Vec<&[f64]> = grid.iter().map(Vec::as_slice).collect();
    let sr: Vec<&[f64]> = sample.iter().map(Vec::as_slice).collect();
    let lhs = max_corr_rows(&gr, &sr)?.value;
    let q = QuantileBaseline::empirical(EmpiricalDistribution::from_samples(&grid)?)?;
    let rhs = max_corr_1d_quantile(&q, &EmpiricalDistribution::from_samples(&sample)?)?;
    out.push(CheckReport::new("assignment_vs_quantile", lhs, rhs, (lhs - rhs).abs(), 1e-10 * scale));

    let (n, d) = (rng.random_range(1..=12), rng.random_range(1..=3));
    let target = random_discrete(rng, n, d)?;
    let alpha = [0.01, 0.05, 0.5, 0.95][rng.random_range(0..4)];
    let lhs = expected_shortfall_mv(&target, alpha)?.value;
    let rhs = alpha * max_corr_1d_quantile(&QuantileBaseline::bernoulli(alpha)?, &sum_distribution(&target)?)?;
    out.push(CheckReport::new("es_vs_bernoulli", lhs, rhs, (lhs - rhs).abs(), 1e-10 * scale));

    let n = rng.random_range(2..=5);
    let d = rng.random_range(1..=2);
    let probe = structure_neutrality_probe(
        &random_rows(rng, n, d),
        &random_rows(rng, n, d),
        &random_rows(rng, n, d),
        0,
        seed,
    )?;
    out.push(CheckReport::new(
        "rearrangement_probe",
        probe.best_found,
        probe.sum_of_parts,
        (probe.best_found - probe.sum_of_parts).abs(),
        1e-10 * scale,
    ));
    Ok(out)
}

fn unit_square_target(rng: &mut ChaCha8Rng, n: usize) -> Result<EmpiricalDistribution> {
    let rows: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.random(), rng.random()]).collect();
    EmpiricalDistribution::from_samples(&rows)
}

fn axioms_trial(rng: &mut ChaCha8Rng, seed: u64, scale: f64) -> Result<Vec<CheckReport>> {
    let mut out = Vec::new();

    // exact one-dimensional evaluations
    let q = QuantileOracle::new(QuantileBaseline::Uniform)?;
    let n = rng.random_range(1..=8);
    let x1 = Risk::from(random_discrete(rng, n, 1)?);
    let y = [rng.random_range(-2.0..2.0)];
    let m = rng.random_range(-3.0..3.0);
    out.push(check_translation_invariance(&q, &x1, &y, m, 1e-12 * scale)?);
    out.push(check_positive_homogeneity(&q, &x1, rng.random_range(0.1..4.0), 1e-12 * scale)?);

    // transport evaluations on the unit square
    let cfg = SolveConfig {
        sample_count: AXIOM_SAMPLE_COUNT,
        seed,
        ..Default::default()
    };
    let solver = MaxCorrelation::new(BaselineMeasure::uniform_cube(2)?, cfg)?;
    let n = rng.random_range(2..=5);
    let target = unit_square_target(rng, n)?;
    let x = Risk::from(target.clone());
    let y: [f64; 2] = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
    let m: f64 = rng.random_range(-2.0..2.0);
    let norm = (y[0] * y[0] + y[1] * y[1]).sqrt();
    let slack = 4.0 * m.abs() * norm * (2.0f64 / 12.0).sqrt() / (AXIOM_SAMPLE_COUNT as f64).sqrt() + 1e-9;
    out.push(check_translation_invariance(&solver, &x, &y, m, slack * scale)?);
    let lambda = rng.random_range(0.5..3.0);
    out.push(check_positive_homogeneity(&solver, &x, lambda, 0.02 * lambda * scale)?);

    let n = rng.random_range(3..=6);
    let xs: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.random(), rng.random()]).collect();
    let ys: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.random(), rng.random()]).collect();
    out.push(check_subadditivity(&solver, &xs, &ys, 0.01 * scale)?);

    let cube = BaselineMeasure::uniform_cube(2)?;
    let orthant = Cone::new(vec![vec![1.0, 0.0], vec![0.0, 1.0]])?;
    let cone = check_cone_monotonicity(&cube, &orthant, 10, seed, 1e-12 * scale)?;
    let probe = cone.probe.expect("probe runs when the condition holds");
    out.push(CheckReport {
        passed: cone.condition_holds && probe.passed,
        name: "cone_monotonicity_orthant".into(),
        ..probe
    });
    let left = Cone::new(vec![vec![-1.0, rng.random_range(-1.0..1.0)]])?;
    let verdict = check_cone_monotonicity(&cube, &left, 1, seed, 1e-12 * scale)?;
    out.push(
        CheckReport::new("cone_condition_rejects_negative", 0.0, 0.0, 0.0, 0.0)
            .with_detail(format!("condition_holds = {}", verdict.condition_holds)),
    );
    if verdict.condition_holds {
        out.last_mut().unwrap().passed = false;
    }

    // row order never reaches the solver
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (atom, w) in target.atoms().zip(target.weights()) {
        let copies = (w * 12.0).round().max(1.0) as usize;
        rows.extend(std::iter::repeat_n(atom.to_vec(), copies));
    }
    let mut shuffled = rows.clone();
    shuffled.shuffle(rng);
    let lhs = solver.rho(&Risk::from(EmpiricalDistribution::from_samples(&shuffled)?))?;
    let rhs = solver.rho(&Risk::from(EmpiricalDistribution::from_samples(&rows)?))?;
    let gap = if lhs.to_bits() == rhs.to_bits() { 0.0 } else { (lhs - rhs).abs().max(f64::MIN_POSITIVE) };
    out.push(CheckReport::new("law_invariance", lhs, rhs, gap, 0.0));
    Ok(out)
}
