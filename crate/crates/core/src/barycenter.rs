//! Outer optimization loops driven by the implicit gradients: entropic
//! Wasserstein barycenters over the simplex, and recovering a cost matrix
//! from a target plan.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::forward::sinkhorn_forward;
use crate::implicit::implicit_backward;
use crate::matrix::Matrix;
use crate::ot::{
    check_lambda, entropic_objective, softmax_backward, softmax_to_simplex, CostMatrix, Marginal, SinkhornConfig,
    TransportPlan, MARGINAL_SUM_TOL,
};

/// `min_a Σᵢ wᵢ d(a, bᵢ)` with `d` the entropic transport objective under a
/// shared ground cost.
#[derive(Debug, Clone)]
pub struct BarycenterProblem {
    pub inputs: Vec<Marginal>,
    pub weights: Vec<f64>,
    pub cost: CostMatrix,
    pub lambda: f64,
    pub tau: usize,
    /// When set, each gradient evaluation uses this many randomly chosen
    /// input terms, reweighted to stay unbiased.
    pub subsample: Option<usize>,
}

impl BarycenterProblem {
    pub fn new(inputs: Vec<Marginal>, weights: Vec<f64>, cost: CostMatrix, lambda: f64, tau: usize) -> Result<Self> {
        check_lambda(lambda)?;
        if inputs.is_empty() {
            return Err(Error::Empty {
                what: "barycenter inputs",
            });
        }
        if weights.len() != inputs.len() {
            return Err(Error::DimensionMismatch {
                what: "barycenter weights",
                expected: inputs.len(),
                found: weights.len(),
            });
        }
        if let Some((index, &value)) = weights.iter().enumerate().find(|(_, &w)| !w.is_finite() || w < 0.0) {
            return Err(Error::NotPositive {
                what: "barycenter weights",
                index,
                value,
            });
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > MARGINAL_SUM_TOL * weights.len().max(1) as f64 {
            return Err(Error::NotNormalized { sum });
        }
        let n = cost.rows();
        if cost.cols() != n {
            return Err(Error::DimensionMismatch {
                what: "square ground cost",
                expected: n,
                found: cost.cols(),
            });
        }
        if let Some(bad) = inputs.iter().find(|b| b.len() != n) {
            return Err(Error::DimensionMismatch {
                what: "barycenter input",
                expected: n,
                found: bad.len(),
            });
        }
        Ok(Self {
            inputs,
            weights,
            cost,
            lambda,
            tau,
            subsample: None,
        })
    }

    pub fn with_subsample(mut self, terms: usize) -> Result<Self> {
        if terms == 0 || terms > self.inputs.len() {
            return Err(Error::InvalidArgument("subsample size must be in 1..=number of inputs"));
        }
        self.subsample = Some(terms);
        Ok(self)
    }

    pub fn support_size(&self) -> usize {
        self.cost.rows()
    }
}

/// Bias-corrected Adam moments.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub first_moment: Vec<f64>,
    pub second_moment: Vec<f64>,
    pub step_count: u64,
    pub step_size: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps_hat: f64,
}

impl AdamState {
    pub const DEFAULT_STEP_SIZE: f64 = 0.05;

    pub fn new(len: usize) -> Self {
        Self {
            first_moment: vec![0.0; len],
            second_moment: vec![0.0; len],
            step_count: 0,
            step_size: Self::DEFAULT_STEP_SIZE,
            beta1: 0.9,
            beta2: 0.999,
            eps_hat: 1e-8,
        }
    }

    pub fn with_step_size(mut self, step_size: f64) -> Self {
        self.step_size = step_size;
        self
    }
}

pub fn adam_step(theta: &mut [f64], grad: &[f64], state: &mut AdamState) -> Result<()> {
    if grad.len() != theta.len() || state.first_moment.len() != theta.len() {
        return Err(Error::DimensionMismatch {
            what: "optimizer parameters",
            expected: theta.len(),
            found: grad.len(),
        });
    }
    state.step_count += 1;
    let t = state.step_count as f64;
    let c1 = 1.0 - libm::pow(state.beta1, t);
    let c2 = 1.0 - libm::pow(state.beta2, t);
    for (((x, &g), m), v) in theta
        .iter_mut()
        .zip(grad)
        .zip(&mut state.first_moment)
        .zip(&mut state.second_moment)
    {
        *m = state.beta1 * *m + (1.0 - state.beta1) * g;
        *v = state.beta2 * *v + (1.0 - state.beta2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *x -= state.step_size * m_hat / (libm::sqrt(v_hat) + state.eps_hat);
    }
    Ok(())
}

/// Entropic objective `⟨P, D⟩ − λ h(P)` at `P⁽τ⁾`, and the plan itself.
pub fn ot_value_and_plan(
    a: &Marginal,
    b: &Marginal,
    cost: &CostMatrix,
    lambda: f64,
    tau: usize,
) -> Result<(f64, TransportPlan)> {
    let cfg = SinkhornConfig::new(lambda, tau)?;
    let r = sinkhorn_forward(cost, a, b, &cfg)?;
    let value = entropic_objective(r.plan.entries(), cost, lambda)?;
    Ok((value, r.plan))
}

/// Loss and gradient in the softmax parameters `θ` of the barycenter.
pub fn barycenter_loss_grad(theta: &[f64], problem: &BarycenterProblem) -> Result<(f64, Vec<f64>)> {
    let terms: Vec<(usize, f64)> = problem.weights.iter().copied().enumerate().collect();
    loss_grad_over(theta, problem, &terms)
}

fn loss_grad_over(theta: &[f64], problem: &BarycenterProblem, terms: &[(usize, f64)]) -> Result<(f64, Vec<f64>)> {
    let n = problem.support_size();
    if theta.len() != n {
        return Err(Error::DimensionMismatch {
            what: "barycenter parameters",
            expected: n,
            found: theta.len(),
        });
    }
    let a = softmax_to_simplex(theta)?;
    let d = problem.cost.entries();
    let mut loss = 0.0;
    let mut grad_a = vec![0.0; n];
    for &(i, w) in terms {
        if w == 0.0 {
            continue;
        }
        let (value, plan) = ot_value_and_plan(&a, &problem.inputs[i], &problem.cost, problem.lambda, problem.tau)?;
        loss += w * value;
        let p = plan.entries();
        let grad_p = Matrix::from_fn(n, n, |r, c| d[(r, c)] + problem.lambda * libm::log(p[(r, c)]));
        let g = implicit_backward(&plan, &grad_p, problem.lambda)?;
        for (acc, gi) in grad_a.iter_mut().zip(&g.grad_a) {
            *acc += w * gi;
        }
    }
    Ok((loss, softmax_backward(theta, &grad_a)?))
}

/// Adam from the uniform barycenter `θ⁰ = 0`. Returns the final barycenter
/// and the loss before each step. The seed only matters with subsampling.
pub fn solve_barycenter(problem: &BarycenterProblem, steps: usize, seed: u64) -> Result<(Marginal, Vec<f64>)> {
    solve_barycenter_with(problem, steps, seed, AdamState::DEFAULT_STEP_SIZE)
}

pub fn solve_barycenter_with(
    problem: &BarycenterProblem,
    steps: usize,
    seed: u64,
    step_size: f64,
) -> Result<(Marginal, Vec<f64>)> {
    if steps == 0 {
        return Err(Error::InvalidArgument("at least one optimizer step is required"));
    }
    let n = problem.support_size();
    let k = problem.inputs.len();
    let mut theta = vec![0.0; n];
    let mut adam = AdamState::new(n).with_step_size(step_size);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let all: Vec<(usize, f64)> = problem.weights.iter().copied().enumerate().collect();
    let mut trace = Vec::with_capacity(steps);
    for _ in 0..steps {
        let (loss, grad) = match problem.subsample {
            Some(s) if s < k => {
                let scale = k as f64 / s as f64;
                let terms: Vec<(usize, f64)> = sample(&mut rng, k, s)
                    .into_iter()
                    .map(|i| (i, problem.weights[i] * scale))
                    .collect();
                loss_grad_over(&theta, problem, &terms)?
            }
            _ => loss_grad_over(&theta, problem, &all)?,
        };
        trace.push(loss);
        adam_step(&mut theta, &grad, &mut adam)?;
    }
    Ok((softmax_to_simplex(&theta)?, trace))
}

/// `‖xᵢ − xⱼ‖₂^p` between the points of a unit-spaced grid: a line of `n`
/// points (`dim = 1`) or a `√n × √n` square (`dim = 2`).
pub fn grid_cost(n: usize, dim: usize, p: f64) -> Result<CostMatrix> {
    if n == 0 {
        return Err(Error::InvalidGrid("grid must have at least one point"));
    }
    if !p.is_finite() || p <= 0.0 {
        return Err(Error::InvalidGrid("distance exponent must be positive"));
    }
    let coords: Vec<(f64, f64)> = match dim {
        1 => (0..n).map(|i| (i as f64, 0.0)).collect(),
        2 => {
            let side = libm::round(libm::sqrt(n as f64)) as usize;
            if side * side != n {
                return Err(Error::InvalidGrid("two-dimensional grid size must be a perfect square"));
            }
            (0..n).map(|i| ((i / side) as f64, (i % side) as f64)).collect()
        }
        _ => return Err(Error::InvalidGrid("grid dimension must be 1 or 2")),
    };
    let m = Matrix::from_fn(n, n, |i, j| {
        let (dx, dy) = (coords[i].0 - coords[j].0, coords[i].1 - coords[j].1);
        let sq = dx * dx + dy * dy;
        if p == 2.0 {
            sq
        } else {
            libm::pow(libm::sqrt(sq), p)
        }
    });
    CostMatrix::new(m)
}

/// `0.002 · max Dᵢⱼ`, i.e. `0.002 ·` the squared grid diameter for a
/// squared-distance cost.
pub fn default_barycenter_lambda(cost: &CostMatrix) -> f64 {
    let max = cost.entries().max_abs();
    if max > 0.0 {
        0.002 * max
    } else {
        0.002
    }
}

/// Fits a cost matrix whose entropic plan matches `target` by minimizing
/// `½‖S(C) − P_target‖²_F` with Adam from `C = 0`. Returns the iterate with
/// the lowest loss seen and the loss before each step.
///
/// Once the loss reaches rounding level the gradient is pure noise, which
/// Adam rescales to full-size steps, so the last iterate can be worse than
/// an earlier one.
pub fn invert_cost_demo(
    target: &TransportPlan,
    a: &Marginal,
    b: &Marginal,
    lambda: f64,
    tau: usize,
    steps: usize,
) -> Result<(CostMatrix, Vec<f64>)> {
    invert_cost_with(target, a, b, lambda, tau, steps, AdamState::DEFAULT_STEP_SIZE)
}

pub fn invert_cost_with(
    target: &TransportPlan,
    a: &Marginal,
    b: &Marginal,
    lambda: f64,
    tau: usize,
    steps: usize,
    step_size: f64,
) -> Result<(CostMatrix, Vec<f64>)> {
    if steps == 0 {
        return Err(Error::InvalidArgument("at least one optimizer step is required"));
    }
    let (m, n) = target.shape();
    if a.len() != m || b.len() != n {
        return Err(Error::DimensionMismatch {
            what: "marginals",
            expected: m + n,
            found: a.len() + b.len(),
        });
    }
    let cfg = SinkhornConfig::new(lambda, tau)?;
    let goal = target.entries();
    let mut c = Matrix::zeros(m, n);
    let mut adam = AdamState::new(m * n).with_step_size(step_size);
    let mut trace = Vec::with_capacity(steps);
    let mut best = (f64::INFINITY, c.clone());
    for _ in 0..steps {
        let cost = CostMatrix::new(c.clone())?;
        let r = sinkhorn_forward(&cost, a, b, &cfg)?;
        let diff = r.plan.entries().sub(goal);
        let norm = diff.frobenius_norm();
        let loss = 0.5 * norm * norm;
        trace.push(loss);
        if loss < best.0 {
            best = (loss, c.clone());
        }
        let g = implicit_backward(&r.plan, &diff, lambda)?;
        adam_step(c.as_mut_slice(), g.grad_c.as_slice(), &mut adam)?;
    }
    Ok((CostMatrix::new(best.1)?, trace))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adam_zero_gradient_is_a_no_op() {
        let mut theta = vec![1.0, -2.0];
        let mut s = AdamState::new(2);
        adam_step(&mut theta, &[0.0, 0.0], &mut s).unwrap();
        assert_eq!(theta, vec![1.0, -2.0]);
        assert_eq!(s.step_count, 1);
    }

    #[test]
    fn adam_first_step_is_nearly_step_size() {
        let mut theta = vec![0.0];
        let mut s = AdamState::new(1);
        adam_step(&mut theta, &[1.0], &mut s).unwrap();
        let expected = -0.05 / (1.0 + 1e-8);
        assert!((theta[0] - expected).abs() < 1e-15);
    }

    #[test]
    fn adam_constant_gradient_steps_tend_to_step_size() {
        let mut theta = vec![0.0, 0.0];
        let mut s = AdamState::new(2);
        let mut prev = theta.clone();
        for _ in 0..500 {
            adam_step(&mut theta, &[3.0, -0.2], &mut s).unwrap();
            let d0 = theta[0] - prev[0];
            let d1 = theta[1] - prev[1];
            assert!((d0 + 0.05).abs() < 1e-6 && (d1 - 0.05).abs() < 1e-6);
            prev = theta.clone();
        }
    }

    #[test]
    fn grid_costs_from_coordinates() {
        let c = grid_cost(2, 1, 2.0).unwrap();
        assert_eq!(c.entries(), &Matrix::from_rows(&[[0.0, 1.0], [1.0, 0.0]]).unwrap());
        let c = grid_cost(3, 1, 2.0).unwrap();
        assert_eq!(
            c.entries(),
            &Matrix::from_rows(&[[0.0, 1.0, 4.0], [1.0, 0.0, 1.0], [4.0, 1.0, 0.0]]).unwrap()
        );
        // 2×2 grid points (0,0), (0,1), (1,0), (1,1).
        let c = grid_cost(4, 2, 2.0).unwrap();
        assert_eq!(
            c.entries(),
            &Matrix::from_rows(&[
                [0.0, 1.0, 1.0, 2.0],
                [1.0, 0.0, 2.0, 1.0],
                [1.0, 2.0, 0.0, 1.0],
                [2.0, 1.0, 1.0, 0.0]
            ])
            .unwrap()
        );
        assert_eq!(grid_cost(3, 1, 1.0).unwrap().entries()[(0, 2)], 2.0);
        assert!(matches!(grid_cost(5, 2, 2.0), Err(Error::InvalidGrid(_))));
        assert!(matches!(grid_cost(4, 3, 2.0), Err(Error::InvalidGrid(_))));
        assert!(matches!(grid_cost(0, 1, 2.0), Err(Error::InvalidGrid(_))));
    }

    #[test]
    fn single_atom_value() {
        let one = Marginal::uniform(1).unwrap();
        let d = CostMatrix::new(Matrix::filled(1, 1, 3.0)).unwrap();
        let (v, plan) = ot_value_and_plan(&one, &one, &d, 0.25, 5).unwrap();
        assert!((v - (3.0 - 0.25)).abs() < 1e-15);
        assert_eq!(plan.entries()[(0, 0)], 1.0);
    }

    #[test]
    fn problem_validation() {
        let d = grid_cost(3, 1, 2.0).unwrap();
        let u = Marginal::uniform(3).unwrap();
        assert!(BarycenterProblem::new(vec![], vec![], d.clone(), 1.0, 10).is_err());
        assert!(BarycenterProblem::new(vec![u.clone()], vec![0.5], d.clone(), 1.0, 10).is_err());
        assert!(BarycenterProblem::new(vec![u.clone()], vec![1.0, 0.0], d.clone(), 1.0, 10).is_err());
        let u2 = Marginal::uniform(2).unwrap();
        assert!(BarycenterProblem::new(vec![u2], vec![1.0], d.clone(), 1.0, 10).is_err());
        let p = BarycenterProblem::new(vec![u], vec![1.0], d, 1.0, 10).unwrap();
        assert!(p.clone().with_subsample(2).is_err());
        assert!(solve_barycenter(&p, 0, 0).is_err());
    }
}
