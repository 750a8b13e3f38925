//! Entropy-regularized optimal transport with a closed-form implicit
//! backward pass.
//!
//! The forward pass runs log-domain Sinkhorn scaling. Gradients of any loss
//! of the resulting plan with respect to the cost matrix and both marginals
//! come from [`implicit_backward`], which solves one symmetric positive
//! definite `(m + n − 1)`-dimensional system and keeps no iteration history.
//! [`unrolled_backward`] differentiates the recorded iterations instead and
//! serves as a baseline. The [`oracles`] module holds slow independent
//! reference computations.

#![no_std]

extern crate alloc;

pub mod barycenter;
pub mod error;
pub mod forward;
pub mod implicit;
pub mod linalg;
pub mod loss;
pub mod matrix;
pub mod oracles;
pub mod ot;
pub mod unrolled;

pub use error::{Error, Result};
pub use forward::{marginal_residual, sinkhorn_forward, ForwardResult, HalfStep, Trajectory};
pub use implicit::{implicit_backward, spd_solve, GradTriple, SchurSystem, RETAINED_MATRICES};
pub use loss::{LinearLoss, PlanLoss, QuadraticLoss};
pub use matrix::{relative_error, Matrix};
pub use ot::{
    entropic_objective, entropy, log_sum_exp, softmax_backward, softmax_to_simplex, CostMatrix, Marginal,
    SinkhornConfig, TransportPlan,
};
pub use unrolled::{unrolled_backward, UnrolledGrad};
