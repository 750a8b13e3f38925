//! Exact unregularized assignment by enumerating permutations.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::ot::CostMatrix;

/// Largest side accepted by [`lap_bruteforce`].
pub const LAP_LIMIT: usize = 6;

#[derive(Debug, Clone, PartialEq)]
pub struct LapSolution {
    /// `permutation[i]` is the column assigned to row `i`.
    pub permutation: Vec<usize>,
    /// `(1/n)·` the permutation matrix; an extreme point of the uniform
    /// transportation polytope, so it has exact zeros.
    pub plan: Matrix,
    /// `⟨plan, C⟩`.
    pub cost: f64,
    /// Plan cost of the next-best permutation minus `cost`; `None` for `n = 1`.
    pub margin: Option<f64>,
}

/// Optimal assignment for uniform marginals. Ties keep the lexicographically
/// first permutation.
pub fn lap_bruteforce(cost: &CostMatrix) -> Result<LapSolution> {
    let n = cost.rows();
    if cost.cols() != n {
        return Err(Error::DimensionMismatch {
            what: "square cost matrix",
            expected: n,
            found: cost.cols(),
        });
    }
    if n > LAP_LIMIT {
        return Err(Error::OracleTooLarge {
            what: "brute-force assignment",
            size: n,
            limit: LAP_LIMIT,
        });
    }
    let c = cost.entries();
    let scale = 1.0 / n as f64;
    let total = |perm: &[usize]| perm.iter().enumerate().map(|(i, &j)| c[(i, j)]).sum::<f64>() * scale;

    let mut perm: Vec<usize> = (0..n).collect();
    let mut best = perm.clone();
    let mut best_cost = total(&perm);
    let mut second = f64::INFINITY;
    while next_permutation(&mut perm) {
        let t = total(&perm);
        if t < best_cost {
            second = best_cost;
            best_cost = t;
            best.copy_from_slice(&perm);
        } else if t < second {
            second = t;
        }
    }
    let mut plan = Matrix::zeros(n, n);
    for (i, &j) in best.iter().enumerate() {
        plan[(i, j)] = scale;
    }
    Ok(LapSolution {
        permutation: best,
        plan,
        cost: best_cost,
        margin: second.is_finite().then_some(second - best_cost),
    })
}

fn next_permutation(p: &mut [usize]) -> bool {
    let Some(i) = (1..p.len()).rev().find(|&i| p[i - 1] < p[i]) else {
        return false;
    };
    let j = (i..p.len()).rev().find(|&j| p[j] > p[i - 1]).unwrap();
    p.swap(i - 1, j);
    p[i..].reverse();
    true
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cost(rows: &[[f64; 2]]) -> CostMatrix {
        CostMatrix::new(Matrix::from_rows(rows).unwrap()).unwrap()
    }

    #[test]
    fn two_by_two_fixtures() {
        let s = lap_bruteforce(&cost(&[[0.0, 1.0], [1.0, 0.0]])).unwrap();
        assert_eq!(s.permutation, alloc::vec![0, 1]);
        assert_eq!(s.plan, Matrix::identity(2).scale(0.5));
        assert_eq!(s.margin, Some(1.0));
        let s = lap_bruteforce(&cost(&[[1.0, 0.0], [0.0, 1.0]])).unwrap();
        assert_eq!(s.permutation, alloc::vec![1, 0]);
        assert_eq!(s.cost, 0.0);
    }

    #[test]
    fn ties_keep_first_permutation() {
        let s = lap_bruteforce(&CostMatrix::new(Matrix::filled(3, 3, 1.0)).unwrap()).unwrap();
        assert_eq!(s.permutation, alloc::vec![0, 1, 2]);
        assert_eq!(s.margin, Some(0.0));
    }

    #[test]
    fn enumerates_all_permutations() {
        let mut p = alloc::vec![0, 1, 2, 3];
        let mut count = 1;
        while next_permutation(&mut p) {
            count += 1;
        }
        assert_eq!(count, 24);
    }

    #[test]
    fn rejects_large_or_rectangular() {
        let big = CostMatrix::new(Matrix::zeros(7, 7)).unwrap();
        assert!(matches!(lap_bruteforce(&big), Err(Error::OracleTooLarge { .. })));
        let rect = CostMatrix::new(Matrix::zeros(2, 3)).unwrap();
        assert!(matches!(lap_bruteforce(&rect), Err(Error::DimensionMismatch { .. })));
    }
}
