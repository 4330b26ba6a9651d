//! Monte Carlo cell statistics for the semi-discrete problem.

use rayon::prelude::*;

use super::potential::PotentialIndex;
use super::SolveConfig;
use crate::error::{Error, Result};
use crate::sampling::{sample_baseline_epoch, PointCloud, CHUNK_SIZE};
use crate::types::{BaselineMeasure, CellStats, DualWeights, EmpiricalDistribution};

/// Smallest sample count accepted for cell estimation.
pub const MIN_SAMPLE_COUNT: usize = 1000;

/// Everything computed from one pass over the baseline sample at fixed weights.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub weights: DualWeights,
    pub counts: Vec<u64>,
    /// Per-cell coordinate sums, row-major `n × d`.
    pub sums: Vec<f64>,
    /// `(1/N) Σ_j w*(u_j)`.
    pub potential_mean: f64,
    /// `(1/N) Σ_j ⟨u_j, Y_{assign(j)}⟩`.
    pub primal: f64,
    /// `Φ_{μ,π}(w) = potential_mean + Σ_k π_k w_k`.
    pub objective: f64,
    pub masses: Vec<f64>,
    /// `‖π - p‖_∞`.
    pub residual: f64,
    /// Cell of every sample point.
    pub assignment: Vec<u32>,
}

impl Evaluation {
    /// `π - p`, the gradient of the objective.
    pub fn gradient(&self, target: &EmpiricalDistribution) -> Vec<f64> {
        target
            .weights()
            .iter()
            .zip(&self.masses)
            .map(|(pi, p)| pi - p)
            .collect()
    }

    pub fn cell_stats(&self, dim: usize, seed: u64) -> CellStats {
        let barycenters = self
            .counts
            .iter()
            .enumerate()
            .map(|(k, &c)| {
                (c > 0).then(|| {
                    self.sums[k * dim..(k + 1) * dim]
                        .iter()
                        .map(|s| s / c as f64)
                        .collect()
                })
            })
            .collect();
        CellStats {
            masses: self.masses.clone(),
            barycenters,
            objective: self.objective,
            sample_count: self.counts.iter().sum::<u64>() as usize,
            seed,
        }
    }
}

struct Partial {
    counts: Vec<u64>,
    sums: Vec<f64>,
    potential: f64,
    primal: f64,
}

/// A target distribution bound to a fixed baseline sample.
pub struct SemiDiscreteProblem<'a> {
    target: &'a EmpiricalDistribution,
    index: PotentialIndex,
    cloud: PointCloud,
}

pub(crate) fn check_baseline(baseline: &BaselineMeasure, target: &EmpiricalDistribution) -> Result<()> {
    if baseline.dim() != target.dim() {
        return Err(Error::DimensionMismatch {
            expected: baseline.dim(),
            found: target.dim(),
        });
    }
    if let BaselineMeasure::BernoulliVector { .. } = baseline {
        return Err(Error::Unsupported(
            "cell estimation needs a continuous or empirical baseline; \
             use the closed-form route for Bernoulli baselines"
                .into(),
        ));
    }
    Ok(())
}

impl<'a> SemiDiscreteProblem<'a> {
    pub fn new(
        baseline: &BaselineMeasure,
        target: &'a EmpiricalDistribution,
        sample_count: usize,
        seed: u64,
    ) -> Result<Self> {
        check_baseline(baseline, target)?;
        if sample_count < MIN_SAMPLE_COUNT {
            return Err(Error::param(
                "sample_count",
                format!("must be at least {MIN_SAMPLE_COUNT}, got {sample_count}"),
            ));
        }
        let cloud = sample_baseline_epoch(baseline, sample_count, seed, 0)?;
        Ok(Self::with_cloud(target, cloud))
    }

    /// Uses a caller-supplied sample; no size check is applied.
    pub fn with_cloud(target: &'a EmpiricalDistribution, cloud: PointCloud) -> Self {
        Self {
            target,
            index: PotentialIndex::new(target),
            cloud,
        }
    }

    pub fn target(&self) -> &EmpiricalDistribution {
        self.target
    }

    pub fn cloud(&self) -> &PointCloud {
        &self.cloud
    }

    pub fn replace_cloud(&mut self, cloud: PointCloud) {
        self.cloud = cloud;
    }

    pub fn evaluate(&self, w: &DualWeights) -> Evaluation {
        self.evaluate_from(w, None)
    }

    /// Same result as [`evaluate`](Self::evaluate), with the cells of a
    /// previous evaluation used as search hints.
    pub fn evaluate_warm(&self, w: &DualWeights, previous: &Evaluation) -> Evaluation {
        if previous.assignment.len() != self.cloud.len() {
            return self.evaluate(w);
        }
        self.evaluate_from(w, Some(&previous.assignment))
    }

    fn evaluate_from(&self, w: &DualWeights, hint: Option<&[u32]>) -> Evaluation {
        let n = self.target.len();
        let dim = self.target.dim();
        let bound = self.index.bind(w.as_slice());
        let ws = w.as_slice();
        let mut assignment = vec![0u32; self.cloud.len()];
        let partials: Vec<Partial> = self
            .cloud
            .coords()
            .par_chunks(CHUNK_SIZE * dim)
            .zip(assignment.par_chunks_mut(CHUNK_SIZE))
            .enumerate()
            .map(|(c, (chunk, cells))| {
                let mut part = Partial {
                    counts: vec![0; n],
                    sums: vec![0.0; n * dim],
                    potential: 0.0,
                    primal: 0.0,
                };
                let hints = hint.map(|h| &h[c * CHUNK_SIZE..c * CHUNK_SIZE + cells.len()]);
                for (j, (u, cell)) in chunk.chunks_exact(dim).zip(cells.iter_mut()).enumerate() {
                    let (value, k) = bound.eval_from(u, hints.map(|h| h[j] as usize));
                    *cell = k as u32;
                    part.counts[k] += 1;
                    for (s, x) in part.sums[k * dim..(k + 1) * dim].iter_mut().zip(u) {
                        *s += x;
                    }
                    part.potential += value;
                    part.primal += value + ws[k];
                }
                part
            })
            .collect();
        // Ordered reduction keeps the result independent of thread count.
        let mut counts = vec![0u64; n];
        let mut sums = vec![0.0; n * dim];
        let mut potential = 0.0;
        let mut primal = 0.0;
        for part in partials {
            for (c, pc) in counts.iter_mut().zip(&part.counts) {
                *c += pc;
            }
            for (s, ps) in sums.iter_mut().zip(&part.sums) {
                *s += ps;
            }
            potential += part.potential;
            primal += part.primal;
        }
        let total = self.cloud.len() as f64;
        let masses: Vec<f64> = counts.iter().map(|&c| c as f64 / total).collect();
        let potential_mean = potential / total;
        let linear: f64 = self.target.weights().iter().zip(ws).map(|(p, w)| p * w).sum();
        let residual = self
            .target
            .weights()
            .iter()
            .zip(&masses)
            .map(|(pi, p)| (pi - p).abs())
            .fold(0.0, f64::max);
        Evaluation {
            weights: w.clone(),
            counts,
            sums,
            potential_mean,
            primal: primal / total,
            objective: potential_mean + linear,
            masses,
            residual,
            assignment,
        }
    }

    /// Cell index of every sample point.
    pub fn assignments(&self, w: &DualWeights) -> Vec<usize> {
        assign_points(&self.index, w, &self.cloud)
    }

    pub fn len(&self) -> usize {
        self.target.len()
    }

    pub fn is_empty(&self) -> bool {
        self.target.is_empty()
    }
}

pub(crate) fn assign_points(index: &PotentialIndex, w: &DualWeights, cloud: &PointCloud) -> Vec<usize> {
    let bound = index.bind(w.as_slice());
    cloud
        .coords()
        .par_chunks(CHUNK_SIZE * cloud.dim())
        .flat_map_iter(|chunk| {
            chunk
                .chunks_exact(cloud.dim())
                .map(|u| bound.eval(u).1)
                .collect::<Vec<_>>()
        })
        .collect()
}

fn check_weights(target: &EmpiricalDistribution, w: &DualWeights) -> Result<()> {
    if w.len() != target.len() {
        return Err(Error::DimensionMismatch {
            expected: target.len(),
            found: w.len(),
        });
    }
    Ok(())
}

/// Cell masses, barycenters and the objective at `w`, estimated from
/// `cfg.sample_count` baseline points drawn with `cfg.seed`.
pub fn cell_stats(
    baseline: &BaselineMeasure,
    target: &EmpiricalDistribution,
    w: &DualWeights,
    cfg: &SolveConfig,
) -> Result<CellStats> {
    check_weights(target, w)?;
    let problem = SemiDiscreteProblem::new(baseline, target, cfg.sample_count, cfg.seed)?;
    Ok(problem.evaluate(w).cell_stats(target.dim(), cfg.seed))
}

/// `Φ_{μ,π}(w) = (1/N) Σ_j w*(u_j) + Σ_k π_k w_k` on the seeded sample.
pub fn objective(
    baseline: &BaselineMeasure,
    target: &EmpiricalDistribution,
    w: &DualWeights,
    cfg: &SolveConfig,
) -> Result<f64> {
    check_weights(target, w)?;
    let problem = SemiDiscreteProblem::new(baseline, target, cfg.sample_count, cfg.seed)?;
    Ok(problem.evaluate(w).objective)
}
