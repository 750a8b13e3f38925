//! File formats, benchmark harness and command-line front end for
//! `sinkhorn-core`.

pub mod bench;
pub mod cli;
pub mod io;

pub use bench::{run_bench, BenchRecord, BenchSpec, Method};
pub use cli::cli_main;
pub use io::{read_matrix_csv, read_vector_csv, write_matrix_csv, write_vector_csv, IoError};
