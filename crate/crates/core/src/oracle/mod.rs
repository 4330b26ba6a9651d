//! Exact reference computations of maximal correlation for small or
//! one-dimensional problems.

mod assignment;
mod probe;
mod quantile;

pub use assignment::{
    max_assignment, max_assignment_exhaustive, max_corr_assignment, max_corr_rows,
    next_permutation, permutation_value, profit_table, transport_simplex_max, AssignmentResult,
    Coupling, CouplingMethod, ASSIGNMENT_MAX, EXHAUSTIVE_MAX, SIMPLEX_MAX_CELLS,
};
pub use probe::{
    structure_neutrality_probe, ProbeCertificate, ProbeResult, PROBE_EXHAUSTIVE_MAX, PROBE_MAX,
};
pub use quantile::{max_corr_1d_quantile, QuantileBaseline};
