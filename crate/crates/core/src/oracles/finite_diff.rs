//! Central finite differences of the end-to-end map `(C, a, b) ↦ ℓ(P⁽τ⁾)`.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::forward::sinkhorn_forward;
use crate::implicit::GradTriple;
use crate::loss::PlanLoss;
use crate::matrix::Matrix;
use crate::ot::{CostMatrix, Marginal, SinkhornConfig};

/// An entropic transport instance together with its iteration budget.
#[derive(Debug, Clone)]
pub struct FdProblem {
    pub cost: CostMatrix,
    pub a: Marginal,
    pub b: Marginal,
    pub lambda: f64,
    pub tau: usize,
}

impl FdProblem {
    /// `ℓ(S⁽τ⁾(C, a, b))`.
    pub fn loss_at(&self, cost: &CostMatrix, a: &Marginal, b: &Marginal, loss: &dyn PlanLoss) -> Result<f64> {
        let cfg = SinkhornConfig::new(self.lambda, self.tau)?;
        let r = sinkhorn_forward(cost, a, b, &cfg)?;
        Ok(loss.value(r.plan.entries()))
    }

    pub fn loss(&self, loss: &dyn PlanLoss) -> Result<f64> {
        self.loss_at(&self.cost, &self.a, &self.b, loss)
    }
}

/// Subtracts the last entry from every entry.
///
/// Marginal gradients are only meaningful along the simplex, so two of them
/// are comparable after this normalization.
pub fn gauge_last_zero(v: &[f64]) -> Vec<f64> {
    let last = v.last().copied().unwrap_or(0.0);
    v.iter().map(|x| x - last).collect()
}

/// Central differences with step `h` for every cost entry, and along the
/// tangent directions `eᵢ − e_last` of each marginal.
///
/// The marginal components come back with last entry zero; the derivative
/// along `eᵢ − e_last` is exactly `∇ᵢ − ∇_last` of any gradient representative.
pub fn finite_difference_loss_grad(problem: &FdProblem, loss: &dyn PlanLoss, h: f64) -> Result<GradTriple> {
    if !h.is_finite() || h <= 0.0 {
        return Err(Error::InvalidArgument("finite-difference step must be positive"));
    }
    let (m, n) = (problem.cost.rows(), problem.cost.cols());
    if problem.a.len() != m || problem.b.len() != n {
        return Err(Error::DimensionMismatch {
            what: "marginals",
            expected: m + n,
            found: problem.a.len() + problem.b.len(),
        });
    }

    let c0 = problem.cost.entries();
    let mut grad_c = Matrix::zeros(m, n);
    for i in 0..m {
        for j in 0..n {
            let x = c0[(i, j)];
            let (up, down) = (x + h, x - h);
            if up == x || down == x {
                return Err(Error::StepUnderflow { coordinate: i * n + j });
            }
            let mut cp = c0.clone();
            cp.as_mut_slice()[i * n + j] = up;
            let mut cm = c0.clone();
            cm.as_mut_slice()[i * n + j] = down;
            let fp = problem.loss_at(&CostMatrix::new(cp)?, &problem.a, &problem.b, loss)?;
            let fm = problem.loss_at(&CostMatrix::new(cm)?, &problem.a, &problem.b, loss)?;
            grad_c[(i, j)] = (fp - fm) / (up - down);
        }
    }

    let grad_a = tangent_differences(problem.a.as_slice(), h, m * n, |w| {
        problem.loss_at(&problem.cost, &w, &problem.b, loss)
    })?;
    let grad_b = tangent_differences(problem.b.as_slice(), h, m * n + m, |w| {
        problem.loss_at(&problem.cost, &problem.a, &w, loss)
    })?;
    Ok(GradTriple { grad_c, grad_a, grad_b })
}

fn tangent_differences(
    base: &[f64],
    h: f64,
    offset: usize,
    mut eval: impl FnMut(Marginal) -> Result<f64>,
) -> Result<Vec<f64>> {
    let k = base.len();
    let mut out = alloc::vec![0.0; k];
    for (i, slot) in out.iter_mut().enumerate().take(k - 1) {
        let mut up = base.to_vec();
        let mut down = base.to_vec();
        up[i] += h;
        up[k - 1] -= h;
        down[i] -= h;
        down[k - 1] += h;
        if up[i] == base[i] || down[i] == base[i] {
            return Err(Error::StepUnderflow { coordinate: offset + i });
        }
        let fp = eval(Marginal::new(up)?)?;
        let fm = eval(Marginal::new(down)?)?;
        *slot = (fp - fm) / (2.0 * h);
    }
    Ok(out)
}

/// Fails with [`Error::StepUnderflow`] when a finite-difference entry is
/// exactly zero while the analytic one is not, the signature of a step so
/// small that both evaluations rounded to the same value.
pub fn ensure_resolved(fd: &GradTriple, analytic: &GradTriple) -> Result<()> {
    let pairs = fd
        .grad_c
        .as_slice()
        .iter()
        .zip(analytic.grad_c.as_slice())
        .map(|(f, a)| (*f, *a))
        .chain(
            fd.grad_a
                .iter()
                .zip(gauge_last_zero(&analytic.grad_a))
                .map(|(f, a)| (*f, a)),
        )
        .chain(
            fd.grad_b
                .iter()
                .zip(gauge_last_zero(&analytic.grad_b))
                .map(|(f, a)| (*f, a)),
        );
    let scale = analytic
        .grad_c
        .max_abs()
        .max(analytic.grad_a.iter().fold(0.0, |s: f64, x| s.max(x.abs())))
        .max(analytic.grad_b.iter().fold(0.0, |s: f64, x| s.max(x.abs())));
    for (coordinate, (f, a)) in pairs.enumerate() {
        if f == 0.0 && a.abs() > 1e-8 * scale {
            return Err(Error::StepUnderflow { coordinate });
        }
    }
    Ok(())
}
