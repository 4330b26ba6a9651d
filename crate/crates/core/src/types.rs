//! Domain types shared by every solver: discrete risks, baseline measures,
//! dual weights and cell statistics.

use std::cmp::Ordering;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::SymmetricPsdMatrix;

/// Weight sums within this distance of 1 are silently renormalized.
pub const WEIGHT_SUM_TOL: f64 = 1e-9;

/// Discrete risk `P_n = Σ π_k δ_{Y_k}` with distinct atoms in `R^d`.
///
/// Atoms are stored row-major in a flat buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalDistribution {
    dim: usize,
    coords: Vec<f64>,
    weights: Vec<f64>,
}

fn lex_cmp(a: &[f64], b: &[f64]) -> Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

impl EmpiricalDistribution {
    /// Validates atoms and weights, keeping the caller's atom order.
    pub fn new(atoms: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::Empty("atoms"));
        }
        if atoms.len() != weights.len() {
            return Err(Error::param(
                "weights",
                format!("{} weights for {} atoms", weights.len(), atoms.len()),
            ));
        }
        let dim = atoms[0].len();
        if dim == 0 {
            return Err(Error::Empty("atom coordinates"));
        }
        let mut coords = Vec::with_capacity(atoms.len() * dim);
        for (row, atom) in atoms.iter().enumerate() {
            if atom.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: atom.len(),
                });
            }
            if let Some(column) = atom.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite { row, column });
            }
            coords.extend_from_slice(atom);
        }
        for (index, &value) in weights.iter().enumerate() {
            if !(value > 0.0 && value.is_finite()) {
                return Err(Error::NonPositiveWeight { index, value });
            }
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::WeightSum { sum });
        }
        let weights = weights.into_iter().map(|w| w / sum).collect();

        let mut order: Vec<usize> = (0..atoms.len()).collect();
        order.sort_by(|&a, &b| lex_cmp(&atoms[a], &atoms[b]).then(a.cmp(&b)));
        for pair in order.windows(2) {
            if atoms[pair[0]] == atoms[pair[1]] {
                return Err(Error::DuplicateAtom {
                    first: pair[0].min(pair[1]),
                    second: pair[0].max(pair[1]),
                });
            }
        }
        Ok(Self {
            dim,
            coords,
            weights,
        })
    }

    /// Equal weights `1/n`.
    pub fn uniform(atoms: Vec<Vec<f64>>) -> Result<Self> {
        let n = atoms.len();
        Self::new(atoms, vec![1.0 / n.max(1) as f64; n])
    }

    /// Law of a weighted sample: repeated rows are merged and their weights
    /// added. The result is in canonical order.
    pub fn from_weighted_rows(rows: &[Vec<f64>], weights: &[f64]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Empty("rows"));
        }
        if rows.len() != weights.len() {
            return Err(Error::param(
                "weights",
                format!("{} weights for {} rows", weights.len(), rows.len()),
            ));
        }
        let mut order: Vec<usize> = (0..rows.len()).collect();
        order.sort_by(|&a, &b| lex_cmp(&rows[a], &rows[b]));
        let mut atoms: Vec<Vec<f64>> = Vec::new();
        let mut merged: Vec<f64> = Vec::new();
        for idx in order {
            match atoms.last() {
                Some(last) if *last == rows[idx] => *merged.last_mut().unwrap() += weights[idx],
                _ => {
                    atoms.push(rows[idx].clone());
                    merged.push(weights[idx]);
                }
            }
        }
        Self::new(atoms, merged).map(Self::canonical)
    }

    /// Empirical law of an unweighted sample.
    pub fn from_samples(rows: &[Vec<f64>]) -> Result<Self> {
        let w = 1.0 / rows.len().max(1) as f64;
        Self::from_weighted_rows(rows, &vec![w; rows.len()])
    }

    /// Same law with atoms sorted lexicographically, so that row order of
    /// the input never reaches a solver.
    pub fn canonical(self) -> Self {
        let n = self.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| lex_cmp(self.atom(a), self.atom(b)));
        let mut coords = Vec::with_capacity(self.coords.len());
        let mut weights = Vec::with_capacity(n);
        for k in order {
            coords.extend_from_slice(self.atom(k));
            weights.push(self.weights[k]);
        }
        Self {
            dim: self.dim,
            coords,
            weights,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn atom(&self, k: usize) -> &[f64] {
        &self.coords[k * self.dim..(k + 1) * self.dim]
    }

    pub fn atoms(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.coords.chunks_exact(self.dim)
    }

    /// Flat row-major coordinates.
    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.atoms().map(<[f64]>::to_vec).collect()
    }

    pub fn mean(&self) -> Vec<f64> {
        let mut mean = vec![0.0; self.dim];
        for (atom, w) in self.atoms().zip(&self.weights) {
            for (m, v) in mean.iter_mut().zip(atom) {
                *m += w * v;
            }
        }
        mean
    }

    /// Affine image `x ↦ scale·x + shift` applied to every atom.
    pub fn map_affine(&self, scale: f64, shift: &[f64]) -> Result<Self> {
        if shift.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: shift.len(),
            });
        }
        let atoms = self
            .atoms()
            .map(|a| a.iter().zip(shift).map(|(x, s)| scale * x + s).collect())
            .collect();
        Self::new(atoms, self.weights.clone())
    }
}

/// Validation entry point for raw input: checks every invariant, renormalizes
/// weights within tolerance, and returns the atoms in canonical order.
pub fn validate_empirical(atoms: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<EmpiricalDistribution> {
    EmpiricalDistribution::new(atoms, weights).map(EmpiricalDistribution::canonical)
}

/// Centered Gaussian baseline with its Cholesky factor cached for sampling.
#[derive(Debug, Clone)]
pub struct GaussianBaseline {
    covariance: SymmetricPsdMatrix,
    factor: DMatrix<f64>,
}

impl GaussianBaseline {
    pub fn new(covariance: SymmetricPsdMatrix) -> Result<Self> {
        covariance.require_positive_definite()?;
        let chol = nalgebra::Cholesky::new(covariance.matrix().clone()).ok_or(Error::Singular {
            min_eigenvalue: covariance.min_eigenvalue(),
        })?;
        Ok(Self {
            covariance,
            factor: chol.l(),
        })
    }

    pub fn covariance(&self) -> &SymmetricPsdMatrix {
        &self.covariance
    }

    /// Lower-triangular `L` with `L Lᵀ = Σ_U`.
    pub fn factor(&self) -> &DMatrix<f64> {
        &self.factor
    }
}

impl PartialEq for GaussianBaseline {
    fn eq(&self, other: &Self) -> bool {
        self.covariance == other.covariance
    }
}

/// Scenario distribution `μ` against which correlation is maximized.
#[derive(Debug, Clone, PartialEq)]
pub enum BaselineMeasure {
    /// Lebesgue measure on `[0,1]^d`.
    UniformCube { dim: usize },
    /// `N(0, Σ_U)`.
    Gaussian(GaussianBaseline),
    /// Mass `α` at `(1/α, …, 1/α)`, mass `1 - α` at the origin.
    BernoulliVector { dim: usize, alpha: f64 },
    Empirical(EmpiricalDistribution),
}

impl BaselineMeasure {
    pub fn uniform_cube(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::param("dim", "must be positive"));
        }
        Ok(Self::UniformCube { dim })
    }

    pub fn gaussian(covariance: SymmetricPsdMatrix) -> Result<Self> {
        GaussianBaseline::new(covariance).map(Self::Gaussian)
    }

    pub fn standard_gaussian(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::param("dim", "must be positive"));
        }
        Self::gaussian(SymmetricPsdMatrix::identity(dim))
    }

    pub fn bernoulli(dim: usize, alpha: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::param("dim", "must be positive"));
        }
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::param("alpha", format!("must lie in (0,1), got {alpha}")));
        }
        Ok(Self::BernoulliVector { dim, alpha })
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::UniformCube { dim } | Self::BernoulliVector { dim, .. } => *dim,
            Self::Gaussian(g) => g.covariance.dim(),
            Self::Empirical(e) => e.dim(),
        }
    }

    pub fn mean(&self) -> Vec<f64> {
        match self {
            Self::UniformCube { dim } => vec![0.5; *dim],
            Self::Gaussian(g) => vec![0.0; g.covariance.dim()],
            // α · (1/α) = 1 in every coordinate
            Self::BernoulliVector { dim, .. } => vec![1.0; *dim],
            Self::Empirical(e) => e.mean(),
        }
    }

    /// Absolutely continuous with respect to Lebesgue measure.
    pub fn is_continuous(&self) -> bool {
        matches!(self, Self::UniformCube { .. } | Self::Gaussian(_))
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::UniformCube { .. } => "uniform-cube",
            Self::Gaussian(_) => "gaussian",
            Self::BernoulliVector { .. } => "bernoulli",
            Self::Empirical(_) => "empirical",
        }
    }
}

/// Dual weights `w` of the potential `w*(u) = max_k ⟨u, Y_k⟩ - w_k`,
/// held in the gauge `min_k w_k = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DualWeights(Vec<f64>);

impl DualWeights {
    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    /// Canonicalizes arbitrary finite values.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Empty("weights"));
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::param("weights", format!("entry {index} is not finite")));
        }
        Ok(Self::canonicalize(values))
    }

    /// Keeps the values as given, without moving to the canonical gauge.
    #[cfg(test)]
    pub(crate) fn from_raw(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub(crate) fn canonicalize(mut values: Vec<f64>) -> Self {
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        if min != 0.0 {
            values.iter_mut().for_each(|v| *v -= min);
        }
        Self(values)
    }

    pub fn canonicalized(&self) -> Self {
        Self::canonicalize(self.0.clone())
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

/// Per-cell mass and barycenter estimated from a baseline sample.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellStats {
    pub masses: Vec<f64>,
    /// `None` for empty cells.
    pub barycenters: Vec<Option<Vec<f64>>>,
    /// `Φ_{μ,π}(w)` on the sample.
    pub objective: f64,
    pub sample_count: usize,
    pub seed: u64,
}

impl CellStats {
    pub fn empty_cells(&self) -> usize {
        self.masses.iter().filter(|&&p| p == 0.0).count()
    }
}
