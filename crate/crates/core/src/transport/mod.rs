//! Semi-discrete optimal transport from a baseline measure to a discrete risk.
//!
//! The dual weights `w` define cells `U_k = {u : argmax_i ⟨u, Y_i⟩ - w_i = k}`;
//! the price-adjustment iteration lowers the price of under-demanded atoms
//! and raises it for over-demanded ones until each cell carries the target
//! mass. Cell masses and barycenters are estimated from a seeded baseline
//! sample.

mod cells;
mod potential;
mod solver;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use cells::{cell_stats, objective, Evaluation, SemiDiscreteProblem, MIN_SAMPLE_COUNT};
pub use potential::{potential_eval, BoundPotential, PotentialIndex};
pub use solver::{
    assign_atoms, generalized_quantile, max_corr_semidiscrete, partition_rows, tatonnement,
    tatonnement_from, tatonnement_with, SolveReport, TraceEntry,
};

/// Step-size schedule for the price update `w ← w - ε (π - p)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum StepRule {
    Fixed {
        epsilon: f64,
    },
    /// `ε_m = ε_0 / (m + 1)^exponent`.
    Decay {
        epsilon0: f64,
        exponent: f64,
    },
    /// Steps are accepted only if the sample objective does not increase;
    /// rejected steps shrink `ε`, accepted ones grow it.
    AdaptiveBacktracking {
        /// Defaults to `1 / (2n)`.
        #[serde(default)]
        epsilon0: Option<f64>,
        shrink: f64,
        grow: f64,
    },
    /// Barzilai-Borwein lengths from the last step `s` and gradient change
    /// `y`, alternating `‖s‖² / ⟨s, y⟩` and `⟨s, y⟩ / ‖y‖²`. A length is
    /// halved until the objective falls below the largest of the last
    /// `memory` accepted values, so the objective may rise between
    /// iterations.
    BarzilaiBorwein {
        /// Defaults to `1 / (2n)`.
        #[serde(default)]
        epsilon0: Option<f64>,
        memory: usize,
    },
}

impl Default for StepRule {
    fn default() -> Self {
        StepRule::AdaptiveBacktracking {
            epsilon0: None,
            shrink: 0.5,
            grow: 1.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolveConfig {
    pub sample_count: usize,
    pub seed: u64,
    pub max_iters: usize,
    pub step_rule: StepRule,
    /// Stop once `‖π - p‖_∞` falls to this level.
    pub tol_residual: f64,
    /// Draw a fresh baseline sample at every iteration.
    pub resample_each_iter: bool,
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self {
            sample_count: 100_000,
            seed: 0,
            max_iters: 5_000,
            step_rule: StepRule::default(),
            tol_residual: 1e-3,
            resample_each_iter: false,
        }
    }
}

fn positive(name: &'static str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::param(name, format!("must be positive, got {v}")))
    }
}

impl SolveConfig {
    pub fn validate(&self) -> Result<()> {
        if self.sample_count < MIN_SAMPLE_COUNT {
            return Err(Error::param(
                "sample_count",
                format!("must be at least {MIN_SAMPLE_COUNT}, got {}", self.sample_count),
            ));
        }
        positive("tol_residual", self.tol_residual)?;
        match self.step_rule {
            StepRule::Fixed { epsilon } => positive("epsilon", epsilon)?,
            StepRule::Decay { epsilon0, exponent } => {
                positive("epsilon0", epsilon0)?;
                if !(exponent > 0.0 && exponent <= 1.0) {
                    return Err(Error::param("exponent", "must lie in (0, 1]"));
                }
            }
            StepRule::AdaptiveBacktracking {
                epsilon0,
                shrink,
                grow,
            } => {
                if let Some(e) = epsilon0 {
                    positive("epsilon0", e)?;
                }
                if !(shrink > 0.0 && shrink < 1.0) {
                    return Err(Error::param("shrink", "must lie in (0, 1)"));
                }
                if !(grow >= 1.0 && grow.is_finite()) {
                    return Err(Error::param("grow", "must be at least 1"));
                }
            }
            StepRule::BarzilaiBorwein { epsilon0, memory } => {
                if let Some(e) = epsilon0 {
                    positive("epsilon0", e)?;
                }
                if memory == 0 {
                    return Err(Error::param("memory", "must be positive"));
                }
            }
        }
        Ok(())
    }
}
