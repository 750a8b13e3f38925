mod common;

use common::*;
use proptest::prelude::*;
use rand::Rng;
use sinkhorn_core::oracles::lap_bruteforce;
use sinkhorn_core::*;

fn swap_cost() -> CostMatrix {
    CostMatrix::new(Matrix::from_rows(&[[0.0, 1.0], [1.0, 0.0]]).unwrap()).unwrap()
}

#[test]
fn single_atom_plan_is_one() {
    let c = CostMatrix::new(Matrix::filled(1, 1, 5.0)).unwrap();
    let one = Marginal::uniform(1).unwrap();
    let f = sinkhorn_forward(&c, &one, &one, &SinkhornConfig::new(0.7, 1).unwrap()).unwrap();
    assert_eq!(f.plan.entries()[(0, 0)], 1.0);
    assert_eq!(f.residual, 0.0);
    assert_eq!(marginal_residual(f.plan.entries(), &one, &one).unwrap(), (0.0, 0.0));
}

#[test]
fn symmetric_two_by_two_closed_form() {
    let half = Marginal::uniform(2).unwrap();
    let f = sinkhorn_forward(&swap_cost(), &half, &half, &SinkhornConfig::new(1.0, 200).unwrap()).unwrap();
    let k = (-1.0f64).exp();
    let d = 0.5 / (1.0 + k);
    let want = Matrix::from_rows(&[[d, d * k], [d * k, d]]).unwrap();
    assert!(f.plan.entries().sub(&want).max_abs() < 1e-10);
    assert!((d - 0.365529).abs() < 1e-6 && (d * k - 0.134471).abs() < 1e-6);
}

#[test]
fn small_lambda_approaches_assignment() {
    let half = Marginal::uniform(2).unwrap();
    let c = swap_cost();
    let f = sinkhorn_forward(&c, &half, &half, &SinkhornConfig::new(0.01, 2000).unwrap()).unwrap();
    let lap = lap_bruteforce(&c).unwrap();
    assert!(f.plan.entries().sub(&lap.plan).max_abs() < 1e-3);
}

#[test]
fn residual_reports_the_column_defect() {
    let mut r = rng(21);
    let c = uniform_cost(&mut r, 5, 7);
    let a = random_marginal(&mut r, 5);
    let b = random_marginal(&mut r, 7);
    let f = sinkhorn_forward(&c, &a, &b, &SinkhornConfig::new(0.05, 3).unwrap()).unwrap();
    let (row, col) = marginal_residual(f.plan.entries(), &a, &b).unwrap();
    assert!(row <= 1e-14);
    assert_eq!(col, f.residual);
    assert!(col > 0.0);
}

#[test]
fn perturbed_plan_defects() {
    let half = Marginal::uniform(2).unwrap();
    let mut p = Matrix::filled(2, 2, 0.25);
    let eps = 1e-3;
    p[(0, 0)] += eps;
    let (row, col) = marginal_residual(&p, &half, &half).unwrap();
    assert!((row - eps).abs() < 1e-15 && (col - eps).abs() < 1e-15);
    let third = Marginal::uniform(3).unwrap();
    assert!(matches!(
        marginal_residual(&p, &half, &third),
        Err(Error::DimensionMismatch { .. })
    ));
}

#[test]
fn trajectory_ends_at_the_plan() {
    let mut r = rng(22);
    let c = uniform_cost(&mut r, 4, 3);
    let a = random_marginal(&mut r, 4);
    let b = random_marginal(&mut r, 3);
    let f = sinkhorn_forward(&c, &a, &b, &SinkhornConfig::new(0.3, 17).unwrap().recording()).unwrap();
    let t = f.trajectory.as_ref().unwrap();
    assert_eq!(t.len(), 35);
    assert_eq!(t.half_step_tags()[0], HalfStep::Init);
    let last = t.steps().last().unwrap().map(libm::exp);
    assert_eq!(&last, f.plan.entries());
    let unrecorded = sinkhorn_forward(&c, &a, &b, &SinkhornConfig::new(0.3, 17).unwrap()).unwrap();
    assert!(unrecorded.trajectory.is_none());
    assert_eq!(unrecorded.plan, f.plan);
}

#[test]
fn input_validation() {
    let c = CostMatrix::new(Matrix::zeros(2, 3)).unwrap();
    let a = Marginal::uniform(2).unwrap();
    let b = Marginal::uniform(3).unwrap();
    assert!(matches!(SinkhornConfig::new(0.0, 5), Err(Error::InvalidLambda(_))));
    assert!(matches!(SinkhornConfig::new(-1.0, 5), Err(Error::InvalidLambda(_))));
    let cfg = SinkhornConfig::new(1.0, 5).unwrap();
    assert!(matches!(
        sinkhorn_forward(&c, &b, &b, &cfg),
        Err(Error::DimensionMismatch { .. })
    ));
    assert!(sinkhorn_forward(&c, &a, &b, &cfg).is_ok());
    assert!(matches!(
        CostMatrix::new(Matrix::from_rows(&[[0.0, f64::NAN]]).unwrap()),
        Err(Error::NonFinite { .. })
    ));
}

#[test]
fn residual_is_monotone_in_iterations() {
    let mut r = rng(23);
    for _ in 0..50 {
        let lambda = r.random_range(0.05..1.0);
        let c = uniform_cost(&mut r, 10, 10);
        let a = random_marginal(&mut r, 10);
        let b = random_marginal(&mut r, 10);
        let residual = |tau| {
            sinkhorn_forward(&c, &a, &b, &SinkhornConfig::new(lambda, tau).unwrap())
                .unwrap()
                .residual
        };
        let tau = r.random_range(1..30);
        let base = residual(tau);
        for k in [1, 10, 100] {
            // Once converged the residual jitters at the rounding level of
            // sums of order one.
            let later = residual(tau + k);
            assert!(later <= base + 4.0 * f64::EPSILON, "tau {tau}+{k}: {later} > {base}");
        }
    }
}

#[test]
fn huge_costs_stay_finite_in_log_space() {
    // Costs of order 1e4 at λ = 0.01 give kernel entries exp(−1e6) that a
    // naive implementation turns into 0/0. The spread is kept to a few units
    // because entries e^{-ΔC/λ} below double range cannot be represented in
    // any plan.
    let mut r = rng(24);
    let c = CostMatrix::new(Matrix::from_fn(6, 6, |_, _| 1e4 - r.random_range(0.0..3.0))).unwrap();
    let a = random_marginal(&mut r, 6);
    let b = random_marginal(&mut r, 6);
    let f = sinkhorn_forward(&c, &a, &b, &SinkhornConfig::new(0.01, 200).unwrap()).unwrap();
    let p = f.plan.entries();
    assert!(p.is_finite());
    assert!(p.as_slice().iter().all(|&x| x > 0.0));
    let (row, _) = marginal_residual(p, &a, &b).unwrap();
    assert!(row < 1e-12);
    assert!(TransportPlan::new(p.clone(), a, b).is_ok());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn constant_cost_shift_leaves_plan_unchanged(seed in any::<u64>(), shift in -50.0..50.0f64) {
        let mut r = rng(seed);
        let (m, n) = (r.random_range(1..8), r.random_range(1..8));
        let lambda = r.random_range(0.05..2.0);
        let c = uniform_cost(&mut r, m, n);
        let a = random_marginal(&mut r, m);
        let b = random_marginal(&mut r, n);
        let shifted = CostMatrix::new(c.entries().map(|x| x + shift)).unwrap();
        let cfg = SinkhornConfig::new(lambda, 50).unwrap();
        let p = sinkhorn_forward(&c, &a, &b, &cfg).unwrap().plan;
        let q = sinkhorn_forward(&shifted, &a, &b, &cfg).unwrap().plan;
        prop_assert!(p.entries().sub(q.entries()).max_abs() <= 1e-12);
    }

    #[test]
    fn cost_and_lambda_scale_together(seed in any::<u64>(), large in any::<bool>()) {
        let s = if large { 10.0 } else { 0.1 };
        let mut r = rng(seed);
        let (m, n) = (r.random_range(1..8), r.random_range(1..8));
        let lambda = r.random_range(0.05..2.0);
        let c = uniform_cost(&mut r, m, n);
        let a = random_marginal(&mut r, m);
        let b = random_marginal(&mut r, n);
        let scaled = CostMatrix::new(c.entries().scale(s)).unwrap();
        let p = sinkhorn_forward(&c, &a, &b, &SinkhornConfig::new(lambda, 50).unwrap()).unwrap().plan;
        let q = sinkhorn_forward(&scaled, &a, &b, &SinkhornConfig::new(s * lambda, 50).unwrap()).unwrap().plan;
        prop_assert!(p.entries().sub(q.entries()).max_abs() <= 1e-12);
    }

    #[test]
    fn output_satisfies_plan_invariants(seed in any::<u64>(), tau in 1usize..60) {
        let mut r = rng(seed);
        let (m, n) = (r.random_range(1..9), r.random_range(1..9));
        let lambda = r.random_range(0.02..2.0);
        let c = uniform_cost(&mut r, m, n);
        let a = random_marginal(&mut r, m);
        let b = random_marginal(&mut r, n);
        let f = sinkhorn_forward(&c, &a, &b, &SinkhornConfig::new(lambda, tau).unwrap()).unwrap();
        prop_assert!(f.plan.is_normalized());
        prop_assert!(f.residual >= 0.0);
        prop_assert!(TransportPlan::new(f.plan.entries().clone(), a, b).is_ok());
    }
}
