#![allow(dead_code)]

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sinkhorn_core::{CostMatrix, Marginal, Matrix};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform_cost(rng: &mut impl Rng, m: usize, n: usize) -> CostMatrix {
    CostMatrix::new(Matrix::from_fn(m, n, |_, _| rng.random::<f64>())).unwrap()
}

/// Entries drawn from `[0.5, 1.5]` and normalized, so no atom is tiny.
pub fn random_marginal(rng: &mut impl Rng, n: usize) -> Marginal {
    Marginal::normalized((0..n).map(|_| rng.random_range(0.5..1.5)).collect()).unwrap()
}

pub fn random_matrix(rng: &mut impl Rng, m: usize, n: usize) -> Matrix {
    Matrix::from_fn(m, n, |_, _| rng.random_range(-1.0..1.0))
}

pub fn concat(parts: &[&[f64]]) -> Vec<f64> {
    parts.iter().flat_map(|p| p.iter().copied()).collect()
}
