//! Empirical check of the gradient error bounds for truncated iterations.
//!
//! For a plan `P⁽τ⁾` at Frobenius distance `ε` from the fixed point `P*`,
//!
//! ```text
//! ‖∇[a;b]ℓ* − ∇[a;b]ℓ⁽τ⁾‖ ≤ κ √(σ₊/σ₋) (C₁/σ₋ + C₂) ε
//! ‖∇C ℓ*   − ∇C ℓ⁽τ⁾‖    ≤ λ⁻¹ σ₊ (C₁/σ₋ + C₂) ε
//! ```
//!
//! The constants are evaluated at the two plans only, which samples the
//! ε-ball rather than bounding it.

use crate::error::{Error, Result};
use crate::forward::sinkhorn_forward;
use crate::implicit::{implicit_backward, GradTriple};
use crate::linalg::singular_values;
use crate::loss::PlanLoss;
use crate::matrix::{norm2, Matrix};
use crate::oracles::kkt::{reduced_constraint_matrix, DENSE_ORACLE_LIMIT};
use crate::oracles::FdProblem;
use crate::ot::{check_lambda, SinkhornConfig};

/// Relative slack allowed before a bound counts as violated.
pub const BOUND_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundConstants {
    pub sigma_minus: f64,
    pub sigma_plus: f64,
    pub c1: f64,
    pub c2: f64,
    /// `‖Ẽ†‖₂ = 1/σ_min(Ẽ)`.
    pub kappa: f64,
    pub epsilon: f64,
    pub lambda: f64,
}

impl BoundConstants {
    fn common_factor(&self) -> f64 {
        (self.c1 / self.sigma_minus + self.c2) * self.epsilon
    }

    pub fn marginal_bound(&self) -> f64 {
        self.kappa * libm::sqrt(self.sigma_plus / self.sigma_minus) * self.common_factor()
    }

    pub fn cost_bound(&self) -> f64 {
        self.sigma_plus / self.lambda * self.common_factor()
    }
}

/// `1/σ_min(Ẽ)` for an `m × n` plan.
pub fn kappa(m: usize, n: usize) -> Result<f64> {
    if m * n > DENSE_ORACLE_LIMIT {
        return Err(Error::OracleTooLarge {
            what: "constraint matrix decomposition",
            size: m * n,
            limit: DENSE_ORACLE_LIMIT,
        });
    }
    let s = singular_values(&reduced_constraint_matrix(m, n));
    match s.last() {
        Some(&smin) if smin > 0.0 => Ok(1.0 / smin),
        _ => Err(Error::Singular),
    }
}

/// Constants for a loss whose Hessian is constant (linear or quadratic).
pub fn bound_constants(p_star: &Matrix, p_tau: &Matrix, loss: &dyn PlanLoss, lambda: f64) -> Result<BoundConstants> {
    check_lambda(lambda)?;
    let (m, n) = p_star.shape();
    if p_tau.shape() != (m, n) {
        return Err(Error::DimensionMismatch {
            what: "truncated plan",
            expected: m * n,
            found: p_tau.rows() * p_tau.cols(),
        });
    }
    let c2 = loss.hessian_frobenius(m, n).ok_or(Error::UnsupportedLoss)?;
    let entries = || p_star.as_slice().iter().chain(p_tau.as_slice());
    let sigma_minus = entries().copied().fold(f64::INFINITY, f64::min);
    let sigma_plus = entries().copied().fold(0.0, f64::max);
    if sigma_minus.is_nan() || sigma_minus <= 0.0 {
        return Err(Error::DegeneratePlan {
            index: 0,
            value: sigma_minus,
        });
    }
    let c1 = loss
        .gradient(p_star)
        .frobenius_norm()
        .max(loss.gradient(p_tau).frobenius_norm());
    Ok(BoundConstants {
        sigma_minus,
        sigma_plus,
        c1,
        c2,
        kappa: kappa(m, n)?,
        epsilon: p_star.sub(p_tau).frobenius_norm(),
        lambda,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorBoundReport {
    pub marginal_lhs: f64,
    pub marginal_rhs: f64,
    pub cost_lhs: f64,
    pub cost_rhs: f64,
    pub marginal_pass: bool,
    pub cost_pass: bool,
}

impl ErrorBoundReport {
    pub fn passed(&self) -> bool {
        self.marginal_pass && self.cost_pass
    }

    /// `LHS/RHS`, a tightness diagnostic; `0` when both sides vanish.
    pub fn marginal_ratio(&self) -> f64 {
        ratio(self.marginal_lhs, self.marginal_rhs)
    }

    pub fn cost_ratio(&self) -> f64 {
        ratio(self.cost_lhs, self.cost_rhs)
    }
}

fn ratio(lhs: f64, rhs: f64) -> f64 {
    if lhs == 0.0 {
        0.0
    } else {
        lhs / rhs
    }
}

pub fn check_error_bounds(
    constants: &BoundConstants,
    grads_star: &GradTriple,
    grads_tau: &GradTriple,
) -> ErrorBoundReport {
    let diff_ab: alloc::vec::Vec<f64> = grads_star
        .grad_a
        .iter()
        .chain(&grads_star.grad_b)
        .zip(grads_tau.grad_a.iter().chain(&grads_tau.grad_b))
        .map(|(s, t)| s - t)
        .collect();
    let marginal_lhs = norm2(&diff_ab);
    let cost_lhs = grads_star.grad_c.sub(&grads_tau.grad_c).frobenius_norm();
    let marginal_rhs = constants.marginal_bound();
    let cost_rhs = constants.cost_bound();
    ErrorBoundReport {
        marginal_lhs,
        marginal_rhs,
        cost_lhs,
        cost_rhs,
        marginal_pass: marginal_lhs <= marginal_rhs * (1.0 + BOUND_SLACK),
        cost_pass: cost_lhs <= cost_rhs * (1.0 + BOUND_SLACK),
    }
}

/// Runs the forward pass at `problem.tau` and at `tau_max`, differentiates
/// both plans implicitly, and checks the bounds.
pub fn error_bound_experiment(
    problem: &FdProblem,
    tau_max: usize,
    loss: &dyn PlanLoss,
) -> Result<(BoundConstants, ErrorBoundReport)> {
    let solve = |tau| {
        let cfg = SinkhornConfig::new(problem.lambda, tau)?;
        sinkhorn_forward(&problem.cost, &problem.a, &problem.b, &cfg)
    };
    let star = solve(tau_max)?;
    let trunc = solve(problem.tau)?;
    let (p_star, p_tau) = (star.plan.entries(), trunc.plan.entries());
    let g_star = implicit_backward(&star.plan, &loss.gradient(p_star), problem.lambda)?;
    let g_tau = implicit_backward(&trunc.plan, &loss.gradient(p_tau), problem.lambda)?;
    let constants = bound_constants(p_star, p_tau, loss, problem.lambda)?;
    Ok((constants, check_error_bounds(&constants, &g_star, &g_tau)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::pseudo_inverse;
    use crate::loss::{LinearLoss, QuadraticLoss};

    #[test]
    fn identical_plans_have_zero_epsilon_and_pass() {
        let p = Matrix::filled(2, 2, 0.25);
        let loss = QuadraticLoss {
            target: Matrix::zeros(2, 2),
        };
        let k = bound_constants(&p, &p, &loss, 0.5).unwrap();
        assert_eq!(k.epsilon, 0.0);
        let g = GradTriple::zeros(2, 2);
        let r = check_error_bounds(&k, &g, &g);
        assert!(r.passed());
        assert_eq!((r.marginal_lhs, r.cost_lhs), (0.0, 0.0));
    }

    #[test]
    fn kappa_matches_pseudoinverse_norm() {
        let e = reduced_constraint_matrix(2, 2);
        assert_eq!(e.shape(), (4, 3));
        let pinv = pseudo_inverse(&e).unwrap();
        let pinv_norm = singular_values(&pinv)[0];
        let k = kappa(2, 2).unwrap();
        assert!((k - pinv_norm).abs() < 1e-12 * k);
    }

    #[test]
    fn linear_loss_constants() {
        let g = Matrix::from_rows(&[[1.0, -2.0], [0.5, 2.0]]).unwrap();
        let loss = LinearLoss { weights: g.clone() };
        let p = Matrix::from_rows(&[[0.3, 0.2], [0.1, 0.4]]).unwrap();
        let q = Matrix::filled(2, 2, 0.25);
        let k = bound_constants(&p, &q, &loss, 0.5).unwrap();
        assert_eq!(k.c2, 0.0);
        assert_eq!(k.c1, g.frobenius_norm());
        assert_eq!((k.sigma_minus, k.sigma_plus), (0.1, 0.4));
    }

    #[test]
    fn rejects_loss_without_known_curvature() {
        struct Cubic;
        impl PlanLoss for Cubic {
            fn value(&self, p: &Matrix) -> f64 {
                p.as_slice().iter().map(|x| x * x * x).sum()
            }
            fn gradient(&self, p: &Matrix) -> Matrix {
                p.map(|x| 3.0 * x * x)
            }
        }
        let p = Matrix::filled(2, 2, 0.25);
        assert!(matches!(
            bound_constants(&p, &p, &Cubic, 1.0),
            Err(Error::UnsupportedLoss)
        ));
    }
}
