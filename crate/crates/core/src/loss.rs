//! Scalar losses of a transport plan, used by the verification harnesses.

use crate::matrix::Matrix;

/// A differentiable function of the plan entries.
pub trait PlanLoss {
    fn value(&self, plan: &Matrix) -> f64;

    fn gradient(&self, plan: &Matrix) -> Matrix;

    /// Frobenius norm of the (constant) Hessian with respect to the
    /// vectorized plan, when it is known exactly.
    fn hessian_frobenius(&self, _rows: usize, _cols: usize) -> Option<f64> {
        None
    }
}

/// `ℓ(P) = ⟨G, P⟩_F`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearLoss {
    pub weights: Matrix,
}

impl PlanLoss for LinearLoss {
    fn value(&self, plan: &Matrix) -> f64 {
        self.weights.dot(plan)
    }

    fn gradient(&self, _plan: &Matrix) -> Matrix {
        self.weights.clone()
    }

    fn hessian_frobenius(&self, _rows: usize, _cols: usize) -> Option<f64> {
        Some(0.0)
    }
}

/// `ℓ(P) = ½ ‖P − P₀‖²_F`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticLoss {
    pub target: Matrix,
}

impl PlanLoss for QuadraticLoss {
    fn value(&self, plan: &Matrix) -> f64 {
        let d = plan.sub(&self.target).frobenius_norm();
        0.5 * d * d
    }

    fn gradient(&self, plan: &Matrix) -> Matrix {
        plan.sub(&self.target)
    }

    /// The Hessian is the identity on `ℝ^{mn}`.
    fn hessian_frobenius(&self, rows: usize, cols: usize) -> Option<f64> {
        Some(libm::sqrt((rows * cols) as f64))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_gradient_and_hessian() {
        let target = Matrix::filled(2, 3, 0.1);
        let loss = QuadraticLoss { target };
        let p = Matrix::filled(2, 3, 0.3);
        assert!((loss.value(&p) - 0.5 * 6.0 * 0.04).abs() < 1e-15);
        assert!(loss.gradient(&p).as_slice().iter().all(|g| (g - 0.2).abs() < 1e-15));
        assert_eq!(loss.hessian_frobenius(2, 3), Some(libm::sqrt(6.0)));
    }

    #[test]
    fn linear_has_zero_curvature() {
        let loss = LinearLoss {
            weights: Matrix::filled(2, 2, 2.0),
        };
        assert_eq!(loss.value(&Matrix::filled(2, 2, 0.25)), 2.0);
        assert_eq!(loss.hessian_frobenius(2, 2), Some(0.0));
    }
}
