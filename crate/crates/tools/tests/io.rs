use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sinkhorn_core::Matrix;
use sinkhorn_tools::io::{read_marginal, IoError};
use sinkhorn_tools::*;

#[test]
fn random_five_by_seven_round_trips_bitwise() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.csv");
    let mut r = ChaCha8Rng::seed_from_u64(1);
    let m = Matrix::from_fn(5, 7, |_, _| r.random_range(-1e3..1e3) * r.random::<f64>().powi(8));
    write_matrix_csv(&m, &path).unwrap();
    let back = read_matrix_csv(&path).unwrap();
    assert_eq!(back.shape(), (5, 7));
    for (x, y) in m.as_slice().iter().zip(back.as_slice()) {
        assert_eq!(x.to_bits(), y.to_bits());
    }
}

#[test]
fn ragged_file_names_line_two() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.csv");
    std::fs::write(&path, "1,2\n3\n").unwrap();
    let err = read_matrix_csv(&path).unwrap_err();
    assert!(matches!(err, IoError::Ragged { line: 2, .. }), "{err:?}");
    assert!(err.to_string().contains("line 2"));
}

#[test]
fn missing_and_empty_files_are_errors() {
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(
        read_matrix_csv(dir.path().join("none.csv")),
        Err(IoError::File { .. })
    ));
    let empty = dir.path().join("e.csv");
    std::fs::write(&empty, "").unwrap();
    assert!(matches!(read_matrix_csv(&empty), Err(IoError::Empty { .. })));
}

#[test]
fn vectors_as_row_or_column() {
    let dir = tempfile::tempdir().unwrap();
    let row = dir.path().join("row.csv");
    let col = dir.path().join("col.csv");
    let grid = dir.path().join("grid.csv");
    std::fs::write(&row, "0.25,0.75\n").unwrap();
    std::fs::write(&col, "0.25\n0.75\n").unwrap();
    std::fs::write(&grid, "1,2\n3,4\n").unwrap();
    assert_eq!(read_vector_csv(&row).unwrap(), vec![0.25, 0.75]);
    assert_eq!(read_vector_csv(&col).unwrap(), vec![0.25, 0.75]);
    assert!(matches!(read_vector_csv(&grid), Err(IoError::NotAVector { .. })));
    let out = dir.path().join("out.csv");
    write_vector_csv(&[0.1, 1e-300], &out).unwrap();
    assert_eq!(read_vector_csv(&out).unwrap(), vec![0.1, 1e-300]);
}

#[test]
fn marginal_sources() {
    let u = read_marginal("uniform", 4).unwrap();
    assert_eq!(u.as_slice(), &[0.25; 4]);
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "0.5\n0.6\n").unwrap();
    assert!(matches!(
        read_marginal(bad.to_str().unwrap(), 2),
        Err(IoError::Invalid { .. })
    ));
}

proptest! {
    #[test]
    fn any_finite_matrix_round_trips(
        rows in 1usize..6,
        cols in 1usize..6,
        bits in proptest::collection::vec(any::<u64>(), 36),
    ) {
        let values: Vec<f64> = bits
            .iter()
            .map(|&b| f64::from_bits(b))
            .map(|x| if x.is_finite() { x } else { 0.5 })
            .take(rows * cols)
            .collect();
        let m = Matrix::from_vec(rows, cols, values).unwrap();
        let text = sinkhorn_tools::io::format_matrix_csv(&m);
        let back = sinkhorn_tools::io::parse_matrix_csv(&text, std::path::Path::new("p.csv")).unwrap();
        for (x, y) in m.as_slice().iter().zip(back.as_slice()) {
            prop_assert_eq!(x.to_bits(), y.to_bits());
        }
    }
}
