//! Domain types shared by every module: marginals, costs, plans, and the
//! entropic objective.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Absolute tolerance on `Σ aᵢ = 1`.
pub const MARGINAL_SUM_TOL: f64 = 1e-12;

/// Absolute tolerance on the row sums of a [`TransportPlan`].
pub const PLAN_ROW_TOL: f64 = 1e-8;

/// A probability vector with strictly positive entries.
///
/// Zero-mass atoms are rejected: the log-domain forward pass and the
/// `diag(p)⁻¹` block of the KKT system both need interior points.
#[derive(Debug, Clone, PartialEq)]
pub struct Marginal {
    weights: Vec<f64>,
}

impl Marginal {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        check_positive("marginal", &weights)?;
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > MARGINAL_SUM_TOL {
            return Err(Error::NotNormalized { sum });
        }
        Ok(Self { weights })
    }

    /// Divides positive weights by their sum.
    pub fn normalized(weights: Vec<f64>) -> Result<Self> {
        check_positive("marginal", &weights)?;
        let sum: f64 = weights.iter().sum();
        Ok(Self {
            weights: weights.into_iter().map(|w| w / sum).collect(),
        })
    }

    pub fn uniform(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::Empty { what: "marginal" });
        }
        Ok(Self {
            weights: alloc::vec![1.0 / n as f64; n],
        })
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.weights
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.weights
    }

    pub fn log(&self) -> Vec<f64> {
        self.weights.iter().map(|&w| libm::log(w)).collect()
    }
}

fn check_positive(what: &'static str, values: &[f64]) -> Result<()> {
    if values.is_empty() {
        return Err(Error::Empty { what });
    }
    for (index, &value) in values.iter().enumerate() {
        if !value.is_finite() {
            return Err(Error::NonFinite { what, index });
        }
        if value.is_nan() || value <= 0.0 {
            return Err(Error::NotPositive { what, index, value });
        }
    }
    Ok(())
}

/// Dense `m×n` matrix of finite transport costs.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    entries: Matrix,
}

impl CostMatrix {
    pub fn new(entries: Matrix) -> Result<Self> {
        if entries.rows() == 0 || entries.cols() == 0 {
            return Err(Error::Empty { what: "cost matrix" });
        }
        if let Some(index) = entries.as_slice().iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite {
                what: "cost matrix",
                index,
            });
        }
        Ok(Self { entries })
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.entries.rows()
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.entries.cols()
    }

    #[inline]
    pub fn entries(&self) -> &Matrix {
        &self.entries
    }

    pub fn into_matrix(self) -> Matrix {
        self.entries
    }
}

/// A strictly positive coupling together with the marginals it was
/// produced for.
///
/// Row sums match `row_marginal` within [`PLAN_ROW_TOL`]. Column sums only
/// match `col_marginal` up to the producer's residual; see
/// [`crate::forward::ForwardResult::residual`]. A plan taken straight from
/// `exp(−C/λ)` without any scaling step is flagged as not normalized.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan {
    entries: Matrix,
    row_marginal: Marginal,
    col_marginal: Marginal,
    normalized: bool,
}

impl TransportPlan {
    pub fn new(entries: Matrix, row_marginal: Marginal, col_marginal: Marginal) -> Result<Self> {
        Self::check_shape(&entries, &row_marginal, &col_marginal)?;
        check_positive("transport plan", entries.as_slice())?;
        for (index, (s, a)) in entries.row_sums().iter().zip(row_marginal.as_slice()).enumerate() {
            let defect = (s - a).abs();
            if defect.is_nan() || defect > PLAN_ROW_TOL {
                return Err(Error::InfeasiblePlan { index, defect });
            }
        }
        Ok(Self {
            entries,
            row_marginal,
            col_marginal,
            normalized: true,
        })
    }

    /// Plan whose marginals are read off its own row and column sums.
    /// The entries must carry unit total mass.
    pub fn from_entries(entries: Matrix) -> Result<Self> {
        check_positive("transport plan", entries.as_slice())?;
        let a = Marginal::new(entries.row_sums())?;
        let b = Marginal::new(entries.col_sums())?;
        Self::new(entries, a, b)
    }

    pub(crate) fn unnormalized(entries: Matrix, row_marginal: Marginal, col_marginal: Marginal) -> Self {
        Self {
            entries,
            row_marginal,
            col_marginal,
            normalized: false,
        }
    }

    fn check_shape(entries: &Matrix, a: &Marginal, b: &Marginal) -> Result<()> {
        if entries.rows() != a.len() {
            return Err(Error::DimensionMismatch {
                what: "plan rows",
                expected: a.len(),
                found: entries.rows(),
            });
        }
        if entries.cols() != b.len() {
            return Err(Error::DimensionMismatch {
                what: "plan columns",
                expected: b.len(),
                found: entries.cols(),
            });
        }
        Ok(())
    }

    #[inline]
    pub fn entries(&self) -> &Matrix {
        &self.entries
    }

    #[inline]
    pub fn row_marginal(&self) -> &Marginal {
        &self.row_marginal
    }

    #[inline]
    pub fn col_marginal(&self) -> &Marginal {
        &self.col_marginal
    }

    /// False only for the raw kernel `exp(−C/λ)` returned by a zero-iteration forward pass.
    #[inline]
    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn shape(&self) -> (usize, usize) {
        self.entries.shape()
    }

    pub fn into_matrix(self) -> Matrix {
        self.entries
    }
}

/// Forward-pass configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SinkhornConfig {
    /// Entropic regularization weight λ.
    pub lambda: f64,
    /// Number of full (column then row) scaling iterations τ.
    pub iterations: usize,
    pub record_trajectory: bool,
    /// Optional early stop once the column defect drops below this value.
    /// Disabled by default; the iteration count is the primary knob.
    pub tolerance: Option<f64>,
}

impl SinkhornConfig {
    pub fn new(lambda: f64, iterations: usize) -> Result<Self> {
        let cfg = Self {
            lambda,
            iterations,
            record_trajectory: false,
            tolerance: None,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn recording(mut self) -> Self {
        self.record_trajectory = true;
        self
    }

    pub fn with_tolerance(mut self, tolerance: f64) -> Self {
        self.tolerance = Some(tolerance);
        self
    }

    pub fn validate(&self) -> Result<()> {
        check_lambda(self.lambda)
    }
}

pub(crate) fn check_lambda(lambda: f64) -> Result<()> {
    if lambda > 0.0 && lambda.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidLambda(lambda))
    }
}

/// `log Σ exp(xᵢ)` with max subtraction.
pub fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY || !max.is_finite() {
        return max;
    }
    max + libm::log(values.map(|v| libm::exp(v - max)).sum::<f64>())
}

/// Maps unconstrained parameters onto the open simplex.
pub fn softmax_to_simplex(theta: &[f64]) -> Result<Marginal> {
    if theta.is_empty() {
        return Err(Error::Empty { what: "softmax input" });
    }
    if let Some(index) = theta.iter().position(|x| !x.is_finite()) {
        return Err(Error::NonFinite {
            what: "softmax input",
            index,
        });
    }
    let max = theta.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = theta.iter().map(|&t| libm::exp(t - max)).collect();
    let total: f64 = exps.iter().sum();
    // Entries more than ~708 below the maximum underflow; they are pinned to
    // the smallest normal double so the result stays in the open simplex.
    let weights = exps
        .into_iter()
        .map(|e| f64::max(e / total, f64::MIN_POSITIVE))
        .collect();
    Ok(Marginal { weights })
}

/// Vector-Jacobian product of [`softmax_to_simplex`]:
/// `(diag(s) − s sᵀ) g` with `s = softmax(θ)`.
pub fn softmax_backward(theta: &[f64], grad_marginal: &[f64]) -> Result<Vec<f64>> {
    if theta.len() != grad_marginal.len() {
        return Err(Error::DimensionMismatch {
            what: "softmax gradient",
            expected: theta.len(),
            found: grad_marginal.len(),
        });
    }
    let s = softmax_to_simplex(theta)?;
    let s = s.as_slice();
    let inner: f64 = s.iter().zip(grad_marginal).map(|(si, gi)| si * gi).sum();
    Ok(s.iter().zip(grad_marginal).map(|(si, gi)| si * (gi - inner)).collect())
}

/// Entropy `h(P) = −Σ Pᵢⱼ (log Pᵢⱼ − 1)`.
pub fn entropy(plan: &Matrix) -> Result<f64> {
    check_positive("plan", plan.as_slice())?;
    Ok(-plan.as_slice().iter().map(|&p| p * (libm::log(p) - 1.0)).sum::<f64>())
}

/// Entropic transport objective `⟨P, C⟩_F − λ h(P)`.
pub fn entropic_objective(plan: &Matrix, cost: &CostMatrix, lambda: f64) -> Result<f64> {
    check_lambda(lambda)?;
    if plan.shape() != cost.entries().shape() {
        let (pr, pc) = plan.shape();
        return Err(if pr != cost.rows() {
            Error::DimensionMismatch {
                what: "plan rows",
                expected: cost.rows(),
                found: pr,
            }
        } else {
            Error::DimensionMismatch {
                what: "plan columns",
                expected: cost.cols(),
                found: pc,
            }
        });
    }
    Ok(plan.dot(cost.entries()) - lambda * entropy(plan)?)
}
