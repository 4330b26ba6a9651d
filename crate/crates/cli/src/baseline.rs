use std::path::PathBuf;

use clap::{Args, ValueEnum};
use serde::Deserialize;

use maxcorr::io::{read_matrix_file, read_points_file};
use maxcorr::{BaselineMeasure, Error, Result, SymmetricPsdMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BaselineKind {
    /// Uniform on the unit cube.
    Cube,
    /// Centered Gaussian, identity covariance unless `--sigma-u` is given.
    Gauss,
    /// Independent Bernoulli(α) coordinates.
    Bernoulli,
    /// Empirical law of the rows of `--baseline-file`.
    File,
}

#[derive(Debug, Args)]
pub struct BaselineArgs {
    #[arg(long, value_enum, default_value = "cube")]
    pub baseline: BaselineKind,
    /// Success probability of the Bernoulli baseline.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Covariance CSV of the Gaussian baseline.
    #[arg(long, value_name = "FILE")]
    pub sigma_u: Option<PathBuf>,
    /// Point CSV of the empirical baseline.
    #[arg(long, value_name = "FILE")]
    pub baseline_file: Option<PathBuf>,
}

fn unused(flag: &str, kind: BaselineKind) -> Error {
    Error::Parse(format!("{flag} does not apply to the {kind:?} baseline").to_lowercase())
}

fn check_dim(found: usize, dim: usize) -> Result<()> {
    if found != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found,
        });
    }
    Ok(())
}

fn bernoulli(alpha: Option<f64>, dim: usize) -> Result<BaselineMeasure> {
    let alpha = alpha.ok_or_else(|| Error::Parse("the bernoulli baseline needs --alpha".into()))?;
    BaselineMeasure::bernoulli(dim, alpha)
}

fn gaussian(sigma: Option<SymmetricPsdMatrix>, dim: usize) -> Result<BaselineMeasure> {
    let sigma = sigma.unwrap_or_else(|| SymmetricPsdMatrix::identity(dim));
    check_dim(sigma.dim(), dim)?;
    BaselineMeasure::gaussian(sigma)
}

impl BaselineArgs {
    /// Baseline matching a target of dimension `dim`.
    pub fn build(&self, dim: usize) -> Result<BaselineMeasure> {
        let kind = self.baseline;
        if self.alpha.is_some() && kind != BaselineKind::Bernoulli {
            return Err(unused("--alpha", kind));
        }
        if self.sigma_u.is_some() && kind != BaselineKind::Gauss {
            return Err(unused("--sigma-u", kind));
        }
        if self.baseline_file.is_some() && kind != BaselineKind::File {
            return Err(unused("--baseline-file", kind));
        }
        match kind {
            BaselineKind::Cube => BaselineMeasure::uniform_cube(dim),
            BaselineKind::Gauss => {
                let sigma = self.sigma_u.as_ref().map(read_matrix_file).transpose()?;
                gaussian(sigma, dim)
            }
            BaselineKind::Bernoulli => bernoulli(self.alpha, dim),
            BaselineKind::File => {
                let path = self
                    .baseline_file
                    .as_ref()
                    .ok_or_else(|| Error::Parse("the file baseline needs --baseline-file".into()))?;
                let source = read_points_file(path)?.into_distribution()?;
                check_dim(source.dim(), dim)?;
                Ok(BaselineMeasure::Empirical(source))
            }
        }
    }
}

/// One entry of a scenario file for `maxcorr convex`.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub baseline: BaselineKind,
    #[serde(default)]
    pub alpha: Option<f64>,
    #[serde(default)]
    pub sigma_u: Option<Vec<Vec<f64>>>,
    /// Atoms of a `file` baseline, equally weighted.
    #[serde(default)]
    pub points: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub penalty: f64,
}

impl ScenarioSpec {
    pub fn build(&self, dim: usize) -> Result<BaselineMeasure> {
        match self.baseline {
            BaselineKind::Cube => BaselineMeasure::uniform_cube(dim),
            BaselineKind::Gauss => {
                let sigma = self.sigma_u.as_deref().map(SymmetricPsdMatrix::from_rows).transpose()?;
                gaussian(sigma, dim)
            }
            BaselineKind::Bernoulli => bernoulli(self.alpha, dim),
            BaselineKind::File => {
                let rows = self
                    .points
                    .as_deref()
                    .ok_or_else(|| Error::Parse("a file scenario needs `points`".into()))?;
                let source = maxcorr::EmpiricalDistribution::from_samples(rows)?;
                check_dim(source.dim(), dim)?;
                Ok(BaselineMeasure::Empirical(source))
            }
        }
    }
}
