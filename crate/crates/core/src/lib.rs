//! Maximal correlation risk measures for multivariate risks.
//!
//! A maximal correlation measure `ρ_μ(X) = sup { E[X · Ũ] : Ũ ~ μ }` scores a
//! random vector by its best possible alignment with a baseline scenario
//! distribution `μ`. This crate evaluates it
//!
//! * in closed form when both `X` and `μ` are centered Gaussians ([`gaussian`]),
//! * by semi-discrete optimal transport when `X` is discrete and `μ` is
//!   continuous ([`transport`]),
//! * exactly in dimension one, for discrete baselines, and by brute force on
//!   small instances ([`oracle`]),
//!
//! and layers expected shortfall, penalized convex measures and axiom
//! checks on top ([`risk`]).

pub mod error;
pub mod gaussian;
pub mod io;
pub mod oracle;
pub mod risk;
pub mod sampling;
pub mod suite;
pub mod transport;
pub mod types;

pub use error::{Error, ErrorKind, Result};
pub use gaussian::{GaussianRisk, SymmetricPsdMatrix};
pub use sampling::{sample_baseline, PointCloud};
pub use transport::{SolveConfig, SolveReport, StepRule};
pub use types::{
    validate_empirical, BaselineMeasure, CellStats, DualWeights, EmpiricalDistribution,
};
