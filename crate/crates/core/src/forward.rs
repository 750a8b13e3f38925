//! Log-domain Sinkhorn scaling.
//!
//! Each iteration normalizes columns towards `b` and then rows towards `a`,
//! starting from `log P = −C/λ`. Because the row step runs last, the
//! returned plan has exact row sums; the column defect is reported as
//! [`ForwardResult::residual`].

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::ot::{log_sum_exp, CostMatrix, Marginal, SinkhornConfig, TransportPlan};

/// Which normalization produced a trajectory snapshot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HalfStep {
    /// The initial kernel `−C/λ`.
    Init,
    Column,
    Row,
}

/// Recorded log-domain iterates of the scaling scheme.
///
/// Snapshot `0` is `−C/λ`; snapshots `2k − 1` and `2k` are the states after
/// the column and row normalization of iteration `k`.
#[derive(Debug, Clone)]
pub struct Trajectory {
    steps: Vec<Matrix>,
    tags: Vec<HalfStep>,
}

impl Trajectory {
    pub fn steps(&self) -> &[Matrix] {
        &self.steps
    }

    pub fn half_step_tags(&self) -> &[HalfStep] {
        &self.tags
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Full iterations covered, `(len − 1) / 2`.
    pub fn iterations(&self) -> usize {
        self.steps.len().saturating_sub(1) / 2
    }

    #[cfg(test)]
    pub(crate) fn truncate_for_test(&mut self, len: usize) {
        self.steps.truncate(len);
        self.tags.truncate(len);
    }

    /// Bytes held by the snapshots.
    pub fn retained_bytes(&self) -> usize {
        self.steps.iter().map(|s| core::mem::size_of_val(s.as_slice())).sum()
    }
}

#[derive(Debug, Clone)]
pub struct ForwardResult {
    pub plan: TransportPlan,
    /// `max_j |Σᵢ Pᵢⱼ − bⱼ|`, the defect of the marginal that is not
    /// enforced last.
    pub residual: f64,
    pub iterations_run: usize,
    pub trajectory: Option<Trajectory>,
}

/// Runs `cfg.iterations` column/row scaling sweeps in log space.
///
/// With zero iterations the raw kernel `exp(−C/λ)` is returned, flagged as
/// not normalized.
pub fn sinkhorn_forward(cost: &CostMatrix, a: &Marginal, b: &Marginal, cfg: &SinkhornConfig) -> Result<ForwardResult> {
    cfg.validate()?;
    check_dims(cost, a, b)?;
    let (m, n) = (cost.rows(), cost.cols());
    let lambda = cfg.lambda;
    let log_a = a.log();
    let log_b = b.log();

    let mut log_p = cost.entries().map(|c| -c / lambda);

    let mut trajectory = if cfg.record_trajectory {
        let count = 2 * cfg.iterations + 1;
        let mut steps = Vec::new();
        let mut tags = Vec::new();
        steps.try_reserve_exact(count).map_err(|_| Error::Allocation {
            bytes: count.saturating_mul(m * n * core::mem::size_of::<f64>()),
        })?;
        tags.try_reserve_exact(count).map_err(|_| Error::Allocation {
            bytes: count.saturating_mul(m * n * core::mem::size_of::<f64>()),
        })?;
        steps.push(log_p.clone());
        tags.push(HalfStep::Init);
        Some(Trajectory { steps, tags })
    } else {
        None
    };

    let mut col_lse = alloc::vec![0.0; n];
    let mut iterations_run = 0;
    for _ in 0..cfg.iterations {
        normalize_columns(&mut log_p, &log_b, &mut col_lse);
        if let Some(t) = trajectory.as_mut() {
            t.steps.push(log_p.clone());
            t.tags.push(HalfStep::Column);
        }
        normalize_rows(&mut log_p, &log_a);
        if let Some(t) = trajectory.as_mut() {
            t.steps.push(log_p.clone());
            t.tags.push(HalfStep::Row);
        }
        iterations_run += 1;
        if let Some(tol) = cfg.tolerance {
            let p = log_p.map(libm::exp);
            if column_defect(&p, b) <= tol {
                break;
            }
        }
    }

    let entries = log_p.map(libm::exp);
    let residual = column_defect(&entries, b);
    let plan = if iterations_run == 0 {
        TransportPlan::unnormalized(entries, a.clone(), b.clone())
    } else {
        TransportPlan::new(entries, a.clone(), b.clone())?
    };
    Ok(ForwardResult {
        plan,
        residual,
        iterations_run,
        trajectory,
    })
}

fn check_dims(cost: &CostMatrix, a: &Marginal, b: &Marginal) -> Result<()> {
    if cost.rows() != a.len() {
        return Err(Error::DimensionMismatch {
            what: "row marginal",
            expected: cost.rows(),
            found: a.len(),
        });
    }
    if cost.cols() != b.len() {
        return Err(Error::DimensionMismatch {
            what: "column marginal",
            expected: cost.cols(),
            found: b.len(),
        });
    }
    Ok(())
}

/// `X ← X − 1ₘ (colLSE(X) − log b)ᵀ`.
pub(crate) fn normalize_columns(log_p: &mut Matrix, log_b: &[f64], lse: &mut [f64]) {
    let (m, n) = log_p.shape();
    for j in 0..n {
        lse[j] = log_sum_exp((0..m).map(|i| log_p[(i, j)]));
    }
    for i in 0..m {
        for (j, x) in log_p.row_mut(i).iter_mut().enumerate() {
            *x += log_b[j] - lse[j];
        }
    }
}

/// `X ← X − (rowLSE(X) − log a) 1ₙᵀ`.
pub(crate) fn normalize_rows(log_p: &mut Matrix, log_a: &[f64]) {
    for (i, &la) in log_a.iter().enumerate() {
        let row = log_p.row_mut(i);
        let lse = log_sum_exp(row.iter().copied());
        let shift = la - lse;
        for x in row.iter_mut() {
            *x += shift;
        }
    }
}

fn column_defect(p: &Matrix, b: &Marginal) -> f64 {
    p.col_sums()
        .iter()
        .zip(b.as_slice())
        .fold(0.0, |m, (s, bj)| f64::max(m, (s - bj).abs()))
}

fn row_defect(p: &Matrix, a: &Marginal) -> f64 {
    p.row_sums()
        .iter()
        .zip(a.as_slice())
        .fold(0.0, |m, (s, ai)| f64::max(m, (s - ai).abs()))
}

/// Maximum row-sum and column-sum defects of `plan` against `(a, b)`.
pub fn marginal_residual(plan: &Matrix, a: &Marginal, b: &Marginal) -> Result<(f64, f64)> {
    if plan.rows() != a.len() {
        return Err(Error::DimensionMismatch {
            what: "plan rows",
            expected: a.len(),
            found: plan.rows(),
        });
    }
    if plan.cols() != b.len() {
        return Err(Error::DimensionMismatch {
            what: "plan columns",
            expected: b.len(),
            found: plan.cols(),
        });
    }
    Ok((row_defect(plan, a), column_defect(plan, b)))
}
