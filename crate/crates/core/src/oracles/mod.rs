//! Independent reference computations used to validate the production
//! passes. They favour directness over speed and cap their input sizes.

mod bounds;
mod finite_diff;
mod kkt;
mod lap;

pub use bounds::{
    bound_constants, check_error_bounds, error_bound_experiment, kappa, BoundConstants, ErrorBoundReport, BOUND_SLACK,
};
pub use finite_diff::{ensure_resolved, finite_difference_loss_grad, gauge_last_zero, FdProblem};
pub use kkt::{
    constraint_matrix, dense_kkt_backward, kkt_residual, recover_duals, reduced_constraint_matrix, DenseKkt, KktPoint,
    DENSE_ORACLE_LIMIT,
};
pub use lap::{lap_bruteforce, LapSolution, LAP_LIMIT};
