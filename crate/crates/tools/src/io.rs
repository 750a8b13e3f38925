//! Headerless CSV matrices and vectors.
//!
//! Values are written with Rust's shortest round-trip float formatting, so a
//! write followed by a read reproduces every double bit for bit.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use sinkhorn_core::{Marginal, Matrix};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: line {line}: {source}")]
    Csv {
        path: PathBuf,
        line: u64,
        #[source]
        source: csv::Error,
    },

    #[error("{path}: line {line} has {found} fields, expected {expected} (ragged row)")]
    Ragged {
        path: PathBuf,
        line: u64,
        expected: usize,
        found: usize,
    },

    #[error("{path}: line {line}, field {field}: cannot parse {token:?} as a number")]
    Parse {
        path: PathBuf,
        line: u64,
        field: usize,
        token: String,
    },

    #[error("{path}: file contains no values")]
    Empty { path: PathBuf },

    #[error("{path}: expected a single row or column, found {rows}x{cols}")]
    NotAVector { path: PathBuf, rows: usize, cols: usize },

    #[error("{path}: {source}")]
    Invalid {
        path: PathBuf,
        #[source]
        source: sinkhorn_core::Error,
    },
}

/// Parses CSV text. `origin` only labels error messages.
pub fn parse_matrix_csv(text: &str, origin: &Path) -> Result<Matrix, IoError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut data = Vec::new();
    let mut width = None;
    let mut rows = 0;
    for record in reader.records() {
        let record = record.map_err(|e| IoError::Csv {
            path: origin.to_path_buf(),
            line: e.position().map_or(0, |p| p.line()),
            source: e,
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let expected = *width.get_or_insert(record.len());
        if record.len() != expected {
            return Err(IoError::Ragged {
                path: origin.to_path_buf(),
                line,
                expected,
                found: record.len(),
            });
        }
        for (field, token) in record.iter().enumerate() {
            let value = token.parse::<f64>().map_err(|_| IoError::Parse {
                path: origin.to_path_buf(),
                line,
                field: field + 1,
                token: token.to_string(),
            })?;
            data.push(value);
        }
        rows += 1;
    }
    let cols = width.unwrap_or(0);
    if rows == 0 || cols == 0 {
        return Err(IoError::Empty {
            path: origin.to_path_buf(),
        });
    }
    Matrix::from_vec(rows, cols, data).map_err(|source| IoError::Invalid {
        path: origin.to_path_buf(),
        source,
    })
}

pub fn read_matrix_csv(path: impl AsRef<Path>) -> Result<Matrix, IoError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| IoError::File {
        path: path.to_path_buf(),
        source,
    })?;
    parse_matrix_csv(&text, path)
}

pub fn format_float(x: f64) -> String {
    format!("{x:?}")
}

pub fn format_matrix_csv(matrix: &Matrix) -> String {
    let mut out = String::new();
    for i in 0..matrix.rows() {
        for (j, x) in matrix.row(i).iter().enumerate() {
            if j > 0 {
                out.push(',');
            }
            let _ = write!(out, "{x:?}");
        }
        out.push('\n');
    }
    out
}

pub fn write_matrix_csv(matrix: &Matrix, path: impl AsRef<Path>) -> Result<(), IoError> {
    write_text(path.as_ref(), &format_matrix_csv(matrix))
}

/// Reads a vector stored either as one row or as one column.
pub fn read_vector_csv(path: impl AsRef<Path>) -> Result<Vec<f64>, IoError> {
    let path = path.as_ref();
    let m = read_matrix_csv(path)?;
    if m.rows() != 1 && m.cols() != 1 {
        return Err(IoError::NotAVector {
            path: path.to_path_buf(),
            rows: m.rows(),
            cols: m.cols(),
        });
    }
    Ok(m.into_vec())
}

/// Writes a vector one value per line.
pub fn write_vector_csv(values: &[f64], path: impl AsRef<Path>) -> Result<(), IoError> {
    let mut out = String::new();
    for x in values {
        let _ = writeln!(out, "{x:?}");
    }
    write_text(path.as_ref(), &out)
}

/// Reads a marginal from `source`, or builds the uniform marginal of length
/// `len` when `source` is the keyword `uniform`.
pub fn read_marginal(source: &str, len: usize) -> Result<Marginal, IoError> {
    let path = Path::new(source);
    let invalid = |source| IoError::Invalid {
        path: path.to_path_buf(),
        source,
    };
    if source == "uniform" {
        return Marginal::uniform(len).map_err(invalid);
    }
    Marginal::new(read_vector_csv(path)?).map_err(invalid)
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<(), IoError> {
    fs::write(path, text).map_err(|source| IoError::File {
        path: path.to_path_buf(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<Matrix, IoError> {
        parse_matrix_csv(text, Path::new("test.csv"))
    }

    #[test]
    fn parses_identity_swap() {
        let m = parse("0,1\n1,0\n").unwrap();
        assert_eq!(m, Matrix::from_rows(&[[0.0, 1.0], [1.0, 0.0]]).unwrap());
    }

    #[test]
    fn ragged_row_names_line_two() {
        match parse("1,2\n3\n") {
            Err(IoError::Ragged {
                line, expected, found, ..
            }) => {
                assert_eq!((line, expected, found), (2, 2, 1));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn rejects_empty_and_garbage() {
        assert!(matches!(parse(""), Err(IoError::Empty { .. })));
        assert!(matches!(parse("\n\n"), Err(IoError::Empty { .. })));
        match parse("1,2\n3,x\n") {
            Err(IoError::Parse { line, field, token, .. }) => {
                assert_eq!((line, field, token.as_str()), (2, 2, "x"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn tolerates_spaces_and_missing_final_newline() {
        let m = parse("1.5, -2e-3\n 3 ,4").unwrap();
        assert_eq!(m.as_slice(), &[1.5, -2e-3, 3.0, 4.0]);
    }

    #[test]
    fn formatting_is_shortest_round_trip() {
        assert_eq!(format_float(0.1), "0.1");
        assert_eq!(format_float(1.0), "1.0");
        assert_eq!(format_float(1e-300), "1e-300");
        let x = 0.1 + 0.2;
        assert_eq!(format_float(x).parse::<f64>().unwrap(), x);
    }
}
