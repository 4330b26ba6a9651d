//! Closed-form maximal correlation between centered Gaussian vectors.
//!
//! For a baseline `U ~ N(0, Σ_U)` and a risk `X ~ N(0, Σ_X)` the optimal
//! rearrangement is linear, `X = A_X U`, and the risk measure reduces to a
//! trace of a matrix square root. Every matrix function here goes through a
//! symmetric eigendecomposition with clamping of round-off negative
//! eigenvalues.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::Serialize;

use crate::error::{Error, Result};

/// Relative symmetry tolerance: `|S_ij - S_ji| <= SYMMETRY_TOL * max(1, max|S|)`.
pub const SYMMETRY_TOL: f64 = 1e-12;

/// Eigenvalues in `[-EIGEN_CLAMP_BAND * scale, 0)` are treated as zero; below
/// the band the matrix is rejected as indefinite.
pub const EIGEN_CLAMP_BAND: f64 = 1e-10;

/// A validated symmetric positive semidefinite matrix.
///
/// The stored entries are exactly symmetric: construction averages the
/// matrix with its transpose once the asymmetry has been checked.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricPsdMatrix {
    matrix: DMatrix<f64>,
    eigenvalues: Vec<f64>,
    eigenvectors: DMatrix<f64>,
}

fn scale_of(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(1.0_f64, |acc, v| acc.max(v.abs()))
}

impl SymmetricPsdMatrix {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        if matrix.nrows() == 0 {
            return Err(Error::Empty("matrix"));
        }
        if matrix.nrows() != matrix.ncols() {
            return Err(Error::DimensionMismatch {
                expected: matrix.nrows(),
                found: matrix.ncols(),
            });
        }
        for (idx, v) in matrix.iter().enumerate() {
            if !v.is_finite() {
                // column-major storage
                return Err(Error::NonFinite {
                    row: idx % matrix.nrows(),
                    column: idx / matrix.nrows(),
                });
            }
        }
        let scale = scale_of(&matrix);
        let asymmetry = (&matrix - matrix.transpose()).amax();
        if asymmetry > SYMMETRY_TOL * scale {
            return Err(Error::NotSymmetric { asymmetry });
        }
        Self::from_symmetric_unchecked((&matrix + matrix.transpose()) * 0.5)
    }

    /// Builds from row-major nested rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.len();
        if d == 0 {
            return Err(Error::Empty("matrix"));
        }
        for row in rows {
            if row.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    found: row.len(),
                });
            }
        }
        Self::new(DMatrix::from_fn(d, d, |i, j| rows[i][j]))
    }

    pub fn identity(dim: usize) -> Self {
        Self::from_symmetric_unchecked(DMatrix::identity(dim, dim))
            .expect("identity is positive definite")
    }

    pub fn diagonal(values: &[f64]) -> Result<Self> {
        Self::new(DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(
            values,
        )))
    }

    /// Symmetrizes internally computed products that are symmetric up to
    /// round-off, then validates semidefiniteness.
    pub(crate) fn from_symmetric_unchecked(matrix: DMatrix<f64>) -> Result<Self> {
        let matrix = (&matrix + matrix.transpose()) * 0.5;
        let scale = scale_of(&matrix);
        let eig = SymmetricEigen::new(matrix.clone());
        let mut eigenvalues: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        let min = eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
        if min < -EIGEN_CLAMP_BAND * scale {
            return Err(Error::NotPositiveSemidefinite {
                min_eigenvalue: min,
            });
        }
        for v in &mut eigenvalues {
            if *v < EIGEN_CLAMP_BAND * scale && *v < 0.0 {
                *v = 0.0;
            }
        }
        Ok(Self {
            matrix,
            eigenvalues,
            eigenvectors: eig.eigenvectors,
        })
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// Clamped eigenvalues, in the order returned by the decomposition.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    /// Strict positive definiteness: the smallest eigenvalue exceeds the clamp band.
    pub fn is_positive_definite(&self) -> bool {
        self.min_eigenvalue() > EIGEN_CLAMP_BAND * scale_of(&self.matrix)
    }

    pub fn require_positive_definite(&self) -> Result<()> {
        if self.is_positive_definite() {
            Ok(())
        } else {
            Err(Error::Singular {
                min_eigenvalue: self.min_eigenvalue(),
            })
        }
    }

    /// `λ · S` for `λ >= 0`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        if !(factor >= 0.0 && factor.is_finite()) {
            return Err(Error::param("factor", format!("must be >= 0, got {factor}")));
        }
        Self::from_symmetric_unchecked(&self.matrix * factor)
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        matrix_rows(&self.matrix)
    }

    fn spectral_map(&self, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
        let q = &self.eigenvectors;
        let diag = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
            self.dim(),
            self.eigenvalues.iter().map(|&v| f(v)),
        ));
        q * diag * q.transpose()
    }
}

/// Row-major nested copy of a matrix, for serialization.
pub fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

/// The unique symmetric PSD square root.
pub fn sqrt_psd(s: &SymmetricPsdMatrix) -> SymmetricPsdMatrix {
    let root = s.spectral_map(f64::sqrt);
    SymmetricPsdMatrix::from_symmetric_unchecked(root)
        .expect("square root of a PSD matrix is PSD")
}

fn inv_sqrt_pd(s: &SymmetricPsdMatrix) -> Result<DMatrix<f64>> {
    s.require_positive_definite()?;
    Ok(s.spectral_map(|v| 1.0 / v.sqrt()))
}

fn check_dims(a: &SymmetricPsdMatrix, b: &SymmetricPsdMatrix) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            found: b.dim(),
        });
    }
    Ok(())
}

/// `(Σ_U^{1/2} Σ_X Σ_U^{1/2})^{1/2}` together with `Σ_U^{±1/2}`.
struct Sandwich {
    root_u: DMatrix<f64>,
    inv_root_u: DMatrix<f64>,
}

impl Sandwich {
    fn new(sigma_u: &SymmetricPsdMatrix) -> Result<Self> {
        let inv_root_u = inv_sqrt_pd(sigma_u)?;
        Ok(Self {
            root_u: sqrt_psd(sigma_u).matrix,
            inv_root_u,
        })
    }

    fn inner_root(&self, sigma: &SymmetricPsdMatrix) -> Result<SymmetricPsdMatrix> {
        let inner = &self.root_u * sigma.matrix() * &self.root_u;
        Ok(sqrt_psd(&SymmetricPsdMatrix::from_symmetric_unchecked(inner)?))
    }
}

/// Linear map `A_X` with `A_X U ~ N(0, Σ_X)` when `U ~ N(0, Σ_U)`; it is the
/// gradient of the convex quadratic `u ↦ ½ uᵀ A_X u`.
pub fn brenier_map_gaussian(
    sigma_u: &SymmetricPsdMatrix,
    sigma_x: &SymmetricPsdMatrix,
) -> Result<SymmetricPsdMatrix> {
    check_dims(sigma_u, sigma_x)?;
    let sw = Sandwich::new(sigma_u)?;
    let mid = sw.inner_root(sigma_x)?;
    SymmetricPsdMatrix::from_symmetric_unchecked(&sw.inv_root_u * mid.matrix() * &sw.inv_root_u)
}

/// `ρ_μ(X) = tr[(Σ_U^{1/2} Σ_X Σ_U^{1/2})^{1/2}]`.
pub fn max_corr_gaussian(sigma_u: &SymmetricPsdMatrix, sigma_x: &SymmetricPsdMatrix) -> Result<f64> {
    check_dims(sigma_u, sigma_x)?;
    sigma_u.require_positive_definite()?;
    let root_u = sqrt_psd(sigma_u);
    let inner = SymmetricPsdMatrix::from_symmetric_unchecked(
        root_u.matrix() * sigma_x.matrix() * root_u.matrix(),
    )?;
    Ok(inner.eigenvalues().iter().map(|v| v.sqrt()).sum())
}

/// Cross-covariance `E[X Yᵀ]` of the μ-comonotonic Gaussian pair with
/// marginals `N(0, Σ_X)` and `N(0, Σ_Y)`.
pub fn comonotone_cross_cov(
    sigma_u: &SymmetricPsdMatrix,
    sigma_x: &SymmetricPsdMatrix,
    sigma_y: &SymmetricPsdMatrix,
) -> Result<DMatrix<f64>> {
    check_dims(sigma_u, sigma_x)?;
    check_dims(sigma_u, sigma_y)?;
    sigma_x.require_positive_definite()?;
    sigma_y.require_positive_definite()?;
    let sw = Sandwich::new(sigma_u)?;
    let rx = sw.inner_root(sigma_x)?;
    let ry = sw.inner_root(sigma_y)?;
    Ok(&sw.inv_root_u * rx.matrix() * ry.matrix() * &sw.inv_root_u)
}

/// True iff `observed` is within `tol` (max-norm) of the comonotone cross-covariance.
pub fn is_gaussian_comonotonic(
    sigma_u: &SymmetricPsdMatrix,
    sigma_x: &SymmetricPsdMatrix,
    sigma_y: &SymmetricPsdMatrix,
    observed: &DMatrix<f64>,
    tol: f64,
) -> Result<bool> {
    if !(tol > 0.0) {
        return Err(Error::param("tol", "must be positive"));
    }
    let expected = comonotone_cross_cov(sigma_u, sigma_x, sigma_y)?;
    if observed.shape() != expected.shape() {
        return Err(Error::DimensionMismatch {
            expected: expected.nrows(),
            found: observed.nrows(),
        });
    }
    Ok((observed - expected).amax() <= tol)
}

/// Centered Gaussian risk `X ~ N(0, Σ_X)`, `Σ_X` positive definite.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianRisk {
    covariance: SymmetricPsdMatrix,
}

impl GaussianRisk {
    pub fn new(covariance: SymmetricPsdMatrix) -> Result<Self> {
        covariance.require_positive_definite()?;
        Ok(Self { covariance })
    }

    pub fn dim(&self) -> usize {
        self.covariance.dim()
    }

    pub fn covariance(&self) -> &SymmetricPsdMatrix {
        &self.covariance
    }
}

/// JSON summary emitted by the command-line front end.
#[derive(Debug, Clone, Serialize)]
pub struct GaussianSummary {
    pub rho: f64,
    /// `max |A_X Σ_U A_X - Σ_X| / max(1, max |Σ_X|)`.
    pub a_x_residual: f64,
    pub dims: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cross_cov: Option<Vec<Vec<f64>>>,
}

/// Relative push-forward residual of a Brenier map.
pub fn push_forward_residual(
    a_x: &SymmetricPsdMatrix,
    sigma_u: &SymmetricPsdMatrix,
    sigma_x: &SymmetricPsdMatrix,
) -> f64 {
    let pushed = a_x.matrix() * sigma_u.matrix() * a_x.matrix();
    (pushed - sigma_x.matrix()).amax() / scale_of(sigma_x.matrix())
}

/// Plain sample covariance (divisor `n - 1`, mean removed) of row samples.
pub fn sample_covariance(rows: &[Vec<f64>]) -> Result<SymmetricPsdMatrix> {
    let n = rows.len();
    if n < 2 {
        return Err(Error::param("rows", "need at least two samples"));
    }
    let d = rows[0].len();
    let mut mean = vec![0.0; d];
    for row in rows {
        if row.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: row.len(),
            });
        }
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut cov = DMatrix::zeros(d, d);
    for row in rows {
        for i in 0..d {
            for j in 0..d {
                cov[(i, j)] += (row[i] - mean[i]) * (row[j] - mean[j]);
            }
        }
    }
    SymmetricPsdMatrix::from_symmetric_unchecked(cov / (n as f64 - 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn m(rows: &[&[f64]]) -> SymmetricPsdMatrix {
        let rows: Vec<Vec<f64>> = rows.iter().map(|r| r.to_vec()).collect();
        SymmetricPsdMatrix::from_rows(&rows).unwrap()
    }

    #[test]
    fn sqrt_of_identity_and_diagonal() {
        let r = sqrt_psd(&SymmetricPsdMatrix::identity(2));
        assert_abs_diff_eq!(r.matrix(), &DMatrix::identity(2, 2), epsilon = 1e-15);
        let r = sqrt_psd(&SymmetricPsdMatrix::diagonal(&[4.0, 9.0]).unwrap());
        assert_abs_diff_eq!(r.matrix()[(0, 0)], 2.0, epsilon = 1e-14);
        assert_abs_diff_eq!(r.matrix()[(1, 1)], 3.0, epsilon = 1e-14);
        assert_abs_diff_eq!(r.matrix()[(0, 1)], 0.0, epsilon = 1e-14);
    }

    #[test]
    fn rejects_asymmetric_and_indefinite() {
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.4, 1.0]);
        assert!(matches!(
            SymmetricPsdMatrix::new(asym),
            Err(Error::NotSymmetric { .. })
        ));
        let indef = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(
            SymmetricPsdMatrix::new(indef),
            Err(Error::NotPositiveSemidefinite { .. })
        ));
    }

    #[test]
    fn tiny_negative_eigenvalue_is_clamped() {
        let s = SymmetricPsdMatrix::diagonal(&[1.0, -1e-12]).unwrap();
        assert_eq!(s.min_eigenvalue(), 0.0);
        assert!(!s.is_positive_definite());
        let r = sqrt_psd(&s);
        assert!(r.matrix().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn identity_transport() {
        let i2 = SymmetricPsdMatrix::identity(2);
        let a = brenier_map_gaussian(&i2, &i2).unwrap();
        assert_abs_diff_eq!(a.matrix(), &DMatrix::identity(2, 2), epsilon = 1e-14);
    }

    #[test]
    fn brenier_map_collapses_to_root_for_identity_baseline() {
        let sx = m(&[&[2.0, 0.3], &[0.3, 1.0]]);
        let a = brenier_map_gaussian(&SymmetricPsdMatrix::identity(2), &sx).unwrap();
        assert_abs_diff_eq!(a.matrix(), sqrt_psd(&sx).matrix(), epsilon = 1e-12);
    }

    #[test]
    fn singular_baseline_rejected() {
        let su = SymmetricPsdMatrix::diagonal(&[1.0, 0.0]).unwrap();
        let sx = SymmetricPsdMatrix::identity(2);
        assert!(matches!(
            brenier_map_gaussian(&su, &sx),
            Err(Error::Singular { .. })
        ));
        assert!(matches!(max_corr_gaussian(&su, &sx), Err(Error::Singular { .. })));
    }

    #[test]
    fn max_corr_d2_examples() {
        let i2 = SymmetricPsdMatrix::identity(2);
        assert_abs_diff_eq!(max_corr_gaussian(&i2, &i2).unwrap(), 2.0, epsilon = 1e-14);
        let sx = SymmetricPsdMatrix::diagonal(&[1.0, 4.0]).unwrap();
        assert_abs_diff_eq!(max_corr_gaussian(&i2, &sx).unwrap(), 3.0, epsilon = 1e-14);
        let rho: f64 = 0.6;
        let sx = m(&[&[1.0, rho], &[rho, 1.0]]);
        let expected = (2.0 + 2.0 * (1.0 - rho * rho).sqrt()).sqrt();
        assert_abs_diff_eq!(max_corr_gaussian(&i2, &sx).unwrap(), expected, epsilon = 1e-12);
    }

    #[test]
    fn max_corr_dimension_mismatch() {
        let err = max_corr_gaussian(
            &SymmetricPsdMatrix::identity(2),
            &SymmetricPsdMatrix::identity(3),
        )
        .unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { .. }));
    }

    #[test]
    fn cross_cov_examples() {
        let i2 = SymmetricPsdMatrix::identity(2);
        let c = comonotone_cross_cov(&i2, &i2, &i2).unwrap();
        assert_abs_diff_eq!(c, DMatrix::identity(2, 2), epsilon = 1e-14);
        let sx = SymmetricPsdMatrix::diagonal(&[4.0, 1.0]).unwrap();
        let sy = SymmetricPsdMatrix::diagonal(&[9.0, 1.0]).unwrap();
        let c = comonotone_cross_cov(&i2, &sx, &sy).unwrap();
        assert_abs_diff_eq!(
            c,
            DMatrix::from_row_slice(2, 2, &[6.0, 0.0, 0.0, 1.0]),
            epsilon = 1e-13
        );
    }

    #[test]
    fn singular_marginal_rejected() {
        let i2 = SymmetricPsdMatrix::identity(2);
        let sx = SymmetricPsdMatrix::diagonal(&[1.0, 0.0]).unwrap();
        assert!(matches!(
            comonotone_cross_cov(&i2, &sx, &i2),
            Err(Error::Singular { .. })
        ));
    }

    #[test]
    fn comonotonic_verdicts() {
        let i2 = SymmetricPsdMatrix::identity(2);
        let c = comonotone_cross_cov(&i2, &i2, &i2).unwrap();
        assert!(is_gaussian_comonotonic(&i2, &i2, &i2, &c, 1e-9).unwrap());
        let counter = -DMatrix::<f64>::identity(2, 2);
        assert!(!is_gaussian_comonotonic(&i2, &i2, &i2, &counter, 1e-3).unwrap());
        assert!(is_gaussian_comonotonic(&i2, &i2, &i2, &c, 0.0).is_err());
    }

    #[test]
    fn sample_covariance_of_two_points() {
        let cov = sample_covariance(&[vec![0.0, 0.0], vec![2.0, -2.0]]).unwrap();
        assert_abs_diff_eq!(
            cov.matrix(),
            &DMatrix::from_row_slice(2, 2, &[2.0, -2.0, -2.0, 2.0]),
            epsilon = 1e-14
        );
    }
}
