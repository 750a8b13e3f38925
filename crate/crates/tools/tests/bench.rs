use sinkhorn_tools::bench::{records_to_csv, trajectory_bytes, CSV_HEADER};
use sinkhorn_tools::*;

fn spec(sizes: &[usize], taus: &[usize], reps: usize) -> BenchSpec {
    BenchSpec::new(sizes.to_vec(), taus.to_vec(), reps, 5)
}

#[test]
fn retained_counts_follow_the_structural_formula() {
    let records = run_bench(&spec(&[2, 3], &[10, 2000], 3)).unwrap();
    assert_eq!(records.len(), 8);
    for r in &records {
        assert!(!r.oom);
        assert!(r.forward_seconds.unwrap() >= 0.0 && r.backward_seconds.unwrap() >= 0.0);
        match r.method {
            Method::Implicit => assert_eq!(r.matrices_retained, 3),
            Method::Unrolled => assert_eq!(r.matrices_retained, 2 * r.tau + 1),
        }
    }
    let unrolled: Vec<_> = records
        .iter()
        .filter(|r| r.method == Method::Unrolled && r.n == 2)
        .collect();
    assert_eq!(unrolled[1].matrices_retained, 4001);
    assert_eq!(unrolled[0].matrices_retained, 21);
}

#[test]
fn oom_budget_is_applied_per_configuration() {
    let mut s = spec(&[4], &[1, 100], 3);
    s.budget_bytes = trajectory_bytes(4, 1);
    let records = run_bench(&s).unwrap();
    let oom: Vec<_> = records.iter().filter(|r| r.oom).collect();
    assert_eq!(oom.len(), 1);
    assert_eq!((oom[0].tau, oom[0].method), (100, Method::Unrolled));
    assert_eq!(oom[0].total_seconds(), None);
    let csv = records_to_csv(&records);
    assert!(csv.starts_with(CSV_HEADER));
    assert!(csv.contains("4,100,unrolled,oom,oom,201"));
}

#[test]
fn invalid_specs_are_rejected() {
    assert!(run_bench(&spec(&[4], &[1], 2)).is_err());
    assert!(run_bench(&spec(&[1], &[1], 3)).is_err());
    let mut s = spec(&[4], &[1], 3);
    s.lambda = -1.0;
    assert!(run_bench(&s).is_err());
}

/// Unrolled backward time at n = 100 rises strictly over τ ∈ {10, 100, 1000, 2000}.
#[test]
fn unrolled_backward_time_increases_with_tau() {
    let records = run_bench(&spec(&[100], &[10, 100, 1000, 2000], 5)).unwrap();
    let times: Vec<f64> = records
        .iter()
        .filter(|r| r.method == Method::Unrolled)
        .map(|r| r.backward_seconds.unwrap())
        .collect();
    assert!(times.windows(2).all(|w| w[0] < w[1]), "{times:?}");
}
