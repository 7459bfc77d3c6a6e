//! Two-state stochastic processes on finite time grids: transition
//! families, Chapman-Kolmogorov checks, path-measure feasibility and
//! Monte Carlo ensembles.

pub mod chains;
pub mod cli;
pub mod error;
pub mod hierarchy;
pub mod lp;
pub mod montecarlo;
pub mod prob;
pub mod quantum;

pub use chains::{
    admissible_initial, ck_certify, ck_residual, interpolation_family, maximal_markov_interval,
    path_consistency_residual, propagate, propagate_from, symmetric_freeze_check,
    symmetric_interpolation, AdmissibleInitialResult, AdmissibleKind, CkReport, FailureMode,
    FreezeReport, InterpolationFamily, IntervalReport, Trajectory,
};
pub use error::{Error, Result};
pub use hierarchy::{
    check_consistency, check_hierarchy, feasibility_solve, feasibility_solve_with, marginal,
    markov_closure_residual, markov_joint, pairwise_transition, FeasibilityResult,
    FeasibilityStatus, PairwiseSpec, PathMeasure,
};
pub use montecarlo::{
    empirical_marginals, empirical_transition, sample_paths, z_score, EnsembleConfig, SamplePath,
};
pub use prob::{
    matrix_apply, matrix_compose, IdentityFamily, ProbabilityVector, State, StochasticMatrix,
    TimeGrid, ToleranceConfig, TransitionFamily,
};
pub use quantum::{
    born_marginals, evolve_state, gillespie_family, quantum_trajectory, GillespieFamily,
    QuantumTrajectoryConfig,
};
