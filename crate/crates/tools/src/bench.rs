//! Runtime comparison of implicit and unrolled differentiation.
//!
//! Each configuration uses a log-normal cost (`ln C_ij ~ N(0, 1)`), uniform
//! marginals and a Gaussian plan gradient. Times are medians of wall-clock
//! measurements after one untimed warm-up run. Memory is accounted
//! structurally as the number of `n × n` matrices a method holds.

use std::fmt::Write as _;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, StandardNormal};
use serde::Serialize;
use sinkhorn_core::{
    implicit_backward, sinkhorn_forward, unrolled_backward, CostMatrix, Marginal, Matrix, SinkhornConfig,
    RETAINED_MATRICES,
};
use thiserror::Error;

/// Default cap on trajectory bytes before a configuration is recorded as
/// out of memory.
pub const DEFAULT_BUDGET_BYTES: u64 = 8 << 30;

pub const CSV_HEADER: &str = "n,tau,method,forward_s,backward_s,matrices_retained";

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("invalid bench spec: {0}")]
    Spec(&'static str),

    #[error("n = {n}, tau = {tau}, {method}: {source}")]
    Numerical {
        n: usize,
        tau: usize,
        method: Method,
        #[source]
        source: sinkhorn_core::Error,
    },

    #[error("n = {n}, tau = {tau}, {method}: repetitions produced different results")]
    Nondeterministic { n: usize, tau: usize, method: Method },
}

#[derive(Debug, Clone)]
pub struct BenchSpec {
    pub sizes: Vec<usize>,
    pub taus: Vec<usize>,
    pub repetitions: usize,
    pub seed: u64,
    pub lambda: f64,
    /// Trajectory byte budget for the unrolled method.
    pub budget_bytes: u64,
}

impl BenchSpec {
    pub const DEFAULT_LAMBDA: f64 = 1.0;

    pub fn new(sizes: Vec<usize>, taus: Vec<usize>, repetitions: usize, seed: u64) -> Self {
        Self {
            sizes,
            taus,
            repetitions,
            seed,
            lambda: Self::DEFAULT_LAMBDA,
            budget_bytes: DEFAULT_BUDGET_BYTES,
        }
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        if self.repetitions < 3 {
            return Err(BenchError::Spec("at least 3 repetitions are required"));
        }
        if self.sizes.is_empty() || self.taus.is_empty() {
            return Err(BenchError::Spec("sizes and taus must be non-empty"));
        }
        if self.sizes.iter().any(|&n| n < 2) {
            return Err(BenchError::Spec("all sizes must be at least 2"));
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(BenchError::Spec("lambda must be positive and finite"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Implicit,
    Unrolled,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::Implicit => "implicit",
            Method::Unrolled => "unrolled",
        })
    }
}

/// One configuration. Times are `None` for out-of-memory records.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRecord {
    pub n: usize,
    pub tau: usize,
    pub method: Method,
    #[serde(rename = "forward_s")]
    pub forward_seconds: Option<f64>,
    #[serde(rename = "backward_s")]
    pub backward_seconds: Option<f64>,
    pub matrices_retained: usize,
    pub oom: bool,
}

impl BenchRecord {
    pub fn total_seconds(&self) -> Option<f64> {
        Some(self.forward_seconds? + self.backward_seconds?)
    }
}

/// Bytes the unrolled method would hold for `(n, τ)`.
pub fn trajectory_bytes(n: usize, tau: usize) -> u64 {
    (2 * tau as u64 + 1) * (n as u64) * (n as u64) * 8
}

struct Instance {
    cost: CostMatrix,
    marginal: Marginal,
    grad_p: Matrix,
}

fn instance(n: usize, seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (n as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
    let log_normal = LogNormal::new(0.0, 1.0).expect("unit log-normal is valid");
    let cost = Matrix::from_fn(n, n, |_, _| log_normal.sample(&mut rng));
    let grad_p = Matrix::from_fn(n, n, |_, _| StandardNormal.sample(&mut rng));
    Instance {
        cost: CostMatrix::new(cost).expect("log-normal samples are finite"),
        marginal: Marginal::uniform(n).expect("n >= 2"),
        grad_p,
    }
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let k = values.len();
    if k % 2 == 1 {
        values[k / 2]
    } else {
        0.5 * (values[k / 2 - 1] + values[k / 2])
    }
}

/// Times one method, returning forward and backward medians and the number of
/// retained matrices.
fn time_method(
    inst: &Instance,
    n: usize,
    tau: usize,
    method: Method,
    spec: &BenchSpec,
) -> Result<(f64, f64, usize), BenchError> {
    let numerical = |source| BenchError::Numerical { n, tau, method, source };
    let mut cfg = SinkhornConfig::new(spec.lambda, tau).map_err(numerical)?;
    if method == Method::Unrolled {
        cfg = cfg.recording();
    }
    let (a, b) = (&inst.marginal, &inst.marginal);
    let mut forward = Vec::with_capacity(spec.repetitions);
    let mut backward = Vec::with_capacity(spec.repetitions);
    let mut first = None;
    let mut retained = 0;
    for rep in 0..=spec.repetitions {
        let start = Instant::now();
        let f = sinkhorn_forward(&inst.cost, a, b, &cfg).map_err(numerical)?;
        let forward_s = start.elapsed().as_secs_f64();
        let start = Instant::now();
        let grad = match method {
            Method::Implicit => {
                retained = RETAINED_MATRICES;
                implicit_backward(&f.plan, &inst.grad_p, spec.lambda).map_err(numerical)?
            }
            Method::Unrolled => {
                let trajectory = f.trajectory.as_ref().expect("recording was requested");
                let u = unrolled_backward(trajectory, a, b, &inst.grad_p, spec.lambda).map_err(numerical)?;
                retained = u.matrices_retained;
                sinkhorn_core::GradTriple {
                    grad_c: u.grad_c,
                    grad_a: u.grad_a,
                    grad_b: u.grad_b,
                }
            }
        };
        let backward_s = start.elapsed().as_secs_f64();
        match &first {
            None => first = Some((f.plan, grad)),
            Some((plan, g)) if *plan == f.plan && *g == grad => {}
            Some(_) => return Err(BenchError::Nondeterministic { n, tau, method }),
        }
        // Repetition 0 is the warm-up.
        if rep > 0 {
            forward.push(forward_s);
            backward.push(backward_s);
        }
    }
    Ok((median(&mut forward), median(&mut backward), retained))
}

/// Runs every `(n, τ, method)` combination of `spec`. Progress lines go to
/// `progress` when given.
pub fn run_bench_with_progress(
    spec: &BenchSpec,
    mut progress: Option<&mut dyn std::io::Write>,
) -> Result<Vec<BenchRecord>, BenchError> {
    spec.validate()?;
    let mut records = Vec::new();
    for &n in &spec.sizes {
        let inst = instance(n, spec.seed);
        for &tau in &spec.taus {
            for method in [Method::Implicit, Method::Unrolled] {
                let record = if method == Method::Unrolled && trajectory_bytes(n, tau) > spec.budget_bytes {
                    BenchRecord {
                        n,
                        tau,
                        method,
                        forward_seconds: None,
                        backward_seconds: None,
                        matrices_retained: 2 * tau + 1,
                        oom: true,
                    }
                } else {
                    let (f, b, retained) = time_method(&inst, n, tau, method, spec)?;
                    BenchRecord {
                        n,
                        tau,
                        method,
                        forward_seconds: Some(f),
                        backward_seconds: Some(b),
                        matrices_retained: retained,
                        oom: false,
                    }
                };
                if let Some(out) = progress.as_deref_mut() {
                    let _ = writeln!(out, "{}", csv_row(&record));
                }
                records.push(record);
            }
        }
    }
    Ok(records)
}

pub fn run_bench(spec: &BenchSpec) -> Result<Vec<BenchRecord>, BenchError> {
    run_bench_with_progress(spec, None)
}

fn csv_row(r: &BenchRecord) -> String {
    let time = |t: Option<f64>| t.map_or_else(|| "oom".to_string(), |x| format!("{x:?}"));
    format!(
        "{},{},{},{},{},{}",
        r.n,
        r.tau,
        r.method,
        time(r.forward_seconds),
        time(r.backward_seconds),
        r.matrices_retained
    )
}

/// CSV with header; out-of-memory records carry `oom` in both time columns.
pub fn records_to_csv(records: &[BenchRecord]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&csv_row(r));
        out.push('\n');
    }
    out
}

pub fn records_to_jsonl(records: &[BenchRecord]) -> String {
    let mut out = String::new();
    for r in records {
        let _ = writeln!(out, "{}", serde_json::to_string(r).expect("records serialize"));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_of_odd_and_even() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 3.0, 2.0]), 2.5);
    }

    #[test]
    fn spec_validation() {
        assert!(BenchSpec::new(vec![10], vec![10], 3, 0).validate().is_ok());
        assert!(BenchSpec::new(vec![10], vec![10], 2, 0).validate().is_err());
        assert!(BenchSpec::new(vec![1], vec![10], 5, 0).validate().is_err());
        assert!(BenchSpec::new(vec![], vec![10], 5, 0).validate().is_err());
    }

    #[test]
    fn trajectory_bytes_formula() {
        assert_eq!(trajectory_bytes(10, 0), 800);
        assert_eq!(trajectory_bytes(1000, 2000), 4001 * 8_000_000);
    }

    #[test]
    fn instance_is_seeded() {
        let x = instance(5, 1);
        let y = instance(5, 1);
        assert_eq!(x.cost, y.cost);
        assert_eq!(x.grad_p, y.grad_p);
        assert_ne!(instance(5, 2).cost, x.cost);
    }
}
