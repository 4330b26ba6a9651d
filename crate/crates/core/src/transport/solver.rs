use serde::Serialize;

use super::cells::{assign_points, check_baseline, Evaluation, SemiDiscreteProblem};
use super::potential::PotentialIndex;
use super::{SolveConfig, StepRule};
use crate::error::{Error, Result};
use crate::sampling::{sample_baseline_epoch, PointCloud};
use crate::types::{BaselineMeasure, CellStats, DualWeights, EmpiricalDistribution};

/// One accepted iterate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceEntry {
    pub iteration: usize,
    pub objective: f64,
    pub residual: f64,
    /// Step size that produced this iterate (0 for the starting point).
    pub step: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveReport {
    pub weights: DualWeights,
    /// Primal value `(1/N) Σ_j ⟨u_j, Y_{assign(j)}⟩` at the final weights.
    pub risk_value: f64,
    /// Dual value `Φ_{μ,π}(w)` at the final weights.
    pub dual_value: f64,
    /// `|risk_value - dual_value|`.
    pub duality_gap: f64,
    /// `‖π - p‖_∞` at the final weights.
    pub residual: f64,
    pub objective_trace: Vec<f64>,
    pub trace: Vec<TraceEntry>,
    pub cell_stats: CellStats,
    pub iterations: usize,
    pub converged: bool,
    pub warnings: Vec<String>,
    pub sample_count: usize,
    pub seed: u64,
}

fn step(w: &DualWeights, gradient: &[f64], eps: f64) -> DualWeights {
    DualWeights::canonicalize(
        w.as_slice()
            .iter()
            .zip(gradient)
            .map(|(wk, gk)| wk - eps * gk)
            .collect(),
    )
}

const BB_MIN_STEP: f64 = 1e-12;
const BB_MAX_STEP: f64 = 1e12;
const ARMIJO: f64 = 1e-4;

/// Runs the price adjustment from `w = 0`.
pub fn tatonnement(
    baseline: &BaselineMeasure,
    target: &EmpiricalDistribution,
    cfg: &SolveConfig,
) -> Result<SolveReport> {
    tatonnement_from(baseline, target, cfg, &DualWeights::zeros(target.len()))
}

pub fn tatonnement_from(
    baseline: &BaselineMeasure,
    target: &EmpiricalDistribution,
    cfg: &SolveConfig,
    initial: &DualWeights,
) -> Result<SolveReport> {
    tatonnement_with(baseline, target, cfg, initial, |_| {})
}

/// Full form: starting weights plus a callback invoked on every accepted iterate.
pub fn tatonnement_with(
    baseline: &BaselineMeasure,
    target: &EmpiricalDistribution,
    cfg: &SolveConfig,
    initial: &DualWeights,
    mut on_iter: impl FnMut(&TraceEntry),
) -> Result<SolveReport> {
    cfg.validate()?;
    check_baseline(baseline, target)?;
    if initial.len() != target.len() {
        return Err(Error::DimensionMismatch {
            expected: target.len(),
            found: initial.len(),
        });
    }
    let n = target.len();
    let mut problem = SemiDiscreteProblem::new(baseline, target, cfg.sample_count, cfg.seed)?;
    let mut w = initial.canonicalized();
    let mut eval = problem.evaluate(&w);

    let mut eps = match cfg.step_rule {
        StepRule::Fixed { epsilon } => epsilon,
        StepRule::Decay { epsilon0, .. } => epsilon0,
        StepRule::AdaptiveBacktracking { epsilon0, .. } | StepRule::BarzilaiBorwein { epsilon0, .. } => {
            epsilon0.unwrap_or(1.0 / (2.0 * n as f64))
        }
    };
    let mut trace = vec![TraceEntry {
        iteration: 0,
        objective: eval.objective,
        residual: eval.residual,
        step: 0.0,
    }];
    on_iter(&trace[0]);
    let mut warnings = Vec::new();
    let mut iterations = 0;
    let mut empty_iters = 0;
    let mut last_step: Option<(Vec<f64>, f64)> = None;

    while eval.residual > cfg.tol_residual && iterations < cfg.max_iters {
        if cfg.resample_each_iter {
            let epoch = u32::try_from(iterations + 1).unwrap_or(u32::MAX);
            problem.replace_cloud(sample_baseline_epoch(baseline, cfg.sample_count, cfg.seed, epoch)?);
            eval = problem.evaluate_warm(&w, &eval);
        }
        if eval.masses.contains(&0.0) {
            empty_iters += 1;
        }
        let gradient = eval.gradient(target);
        let used;
        match cfg.step_rule {
            StepRule::Fixed { epsilon } => {
                used = epsilon;
                w = step(&w, &gradient, epsilon);
                eval = problem.evaluate_warm(&w, &eval);
            }
            StepRule::Decay { epsilon0, exponent } => {
                used = epsilon0 / ((iterations + 1) as f64).powf(exponent);
                w = step(&w, &gradient, used);
                eval = problem.evaluate_warm(&w, &eval);
            }
            StepRule::AdaptiveBacktracking { shrink, grow, .. } => {
                let gmax = gradient.iter().fold(0.0_f64, |m, g| m.max(g.abs()));
                let wmax = w.as_slice().iter().fold(0.0_f64, |m, v| m.max(v.abs()));
                let accepted: Option<(DualWeights, Evaluation, f64)> = loop {
                    if eps * gmax <= 1e-15 * (1.0 + wmax) {
                        break None;
                    }
                    let trial = step(&w, &gradient, eps);
                    let trial_eval = problem.evaluate_warm(&trial, &eval);
                    if trial_eval.objective <= eval.objective {
                        break Some((trial, trial_eval, eps));
                    }
                    eps *= shrink;
                };
                match accepted {
                    Some((trial, trial_eval, e)) => {
                        used = e;
                        w = trial;
                        eval = trial_eval;
                        eps = e * grow;
                    }
                    None => {
                        warnings.push(format!(
                            "step size underflow at iteration {iterations}: no descent step found"
                        ));
                        break;
                    }
                }
            }
            StepRule::BarzilaiBorwein { memory, .. } => {
                if let Some((prev, prev_eps)) = &last_step {
                    // s = -prev_eps * prev, y = gradient - prev
                    let gg: f64 = prev.iter().map(|g| g * g).sum();
                    let gy: f64 = prev.iter().zip(&gradient).map(|(a, b)| a * (a - b)).sum();
                    let yy: f64 = prev.iter().zip(&gradient).map(|(a, b)| (a - b) * (a - b)).sum();
                    eps = if gy <= 0.0 {
                        2.0 * prev_eps
                    } else if iterations % 2 == 0 {
                        prev_eps * gg / gy
                    } else {
                        prev_eps * gy / yy
                    };
                    eps = eps.clamp(BB_MIN_STEP, BB_MAX_STEP);
                }
                let start = trace.len().saturating_sub(memory);
                let reference = trace[start..].iter().fold(f64::NEG_INFINITY, |m, t| m.max(t.objective));
                let g2: f64 = gradient.iter().map(|g| g * g).sum();
                let accepted = loop {
                    if eps < BB_MIN_STEP {
                        break None;
                    }
                    let trial = step(&w, &gradient, eps);
                    let trial_eval = problem.evaluate_warm(&trial, &eval);
                    if trial_eval.objective <= reference - ARMIJO * eps * g2 {
                        break Some((trial, trial_eval));
                    }
                    eps *= 0.5;
                };
                match accepted {
                    Some((trial, trial_eval)) => {
                        used = eps;
                        last_step = Some((gradient, eps));
                        w = trial;
                        eval = trial_eval;
                    }
                    None => {
                        warnings.push(format!(
                            "step size underflow at iteration {iterations}: no descent step found"
                        ));
                        break;
                    }
                }
            }
        }
        iterations += 1;
        let entry = TraceEntry {
            iteration: iterations,
            objective: eval.objective,
            residual: eval.residual,
            step: used,
        };
        on_iter(&entry);
        trace.push(entry);
    }

    if iterations > 0 && empty_iters * 4 > iterations {
        warnings.push(format!(
            "empty cells persisted for {empty_iters} of {iterations} iterations"
        ));
    }
    let converged = eval.residual <= cfg.tol_residual;
    Ok(SolveReport {
        risk_value: eval.primal,
        dual_value: eval.objective,
        duality_gap: (eval.primal - eval.objective).abs(),
        residual: eval.residual,
        objective_trace: trace.iter().map(|t| t.objective).collect(),
        trace,
        cell_stats: eval.cell_stats(target.dim(), cfg.seed),
        weights: w,
        iterations,
        converged,
        warnings,
        sample_count: cfg.sample_count,
        seed: cfg.seed,
    })
}

/// `ρ_μ(P_n)` at the converged weights together with the full report.
pub fn max_corr_semidiscrete(
    baseline: &BaselineMeasure,
    target: &EmpiricalDistribution,
    cfg: &SolveConfig,
) -> Result<(f64, SolveReport)> {
    let report = tatonnement(baseline, target, cfg)?;
    Ok((report.risk_value, report))
}

/// Cell index of every point under weights `w`.
pub fn assign_atoms(
    w: &DualWeights,
    target: &EmpiricalDistribution,
    points: &PointCloud,
) -> Result<Vec<usize>> {
    if points.dim() != target.dim() {
        return Err(Error::DimensionMismatch {
            expected: target.dim(),
            found: points.dim(),
        });
    }
    if w.len() != target.len() {
        return Err(Error::DimensionMismatch {
            expected: target.len(),
            found: w.len(),
        });
    }
    Ok(assign_points(&PotentialIndex::new(target), w, points))
}

/// The generalized quantile `∇w*`: maps each point to the atom of its cell.
pub fn generalized_quantile(
    report: &SolveReport,
    target: &EmpiricalDistribution,
    points: &[Vec<f64>],
) -> Result<Vec<Vec<f64>>> {
    if points.is_empty() {
        return Ok(Vec::new());
    }
    let cloud = PointCloud::from_rows(points)?;
    let cells = assign_atoms(&report.weights, target, &cloud)?;
    Ok(cells.into_iter().map(|k| target.atom(k).to_vec()).collect())
}

/// Rows `(u_1, …, u_d, cell)` for a partition dump.
pub fn partition_rows(
    w: &DualWeights,
    target: &EmpiricalDistribution,
    points: &PointCloud,
) -> Result<Vec<(Vec<f64>, usize)>> {
    let cells = assign_atoms(w, target, points)?;
    Ok(points.points().map(<[f64]>::to_vec).zip(cells).collect())
}
