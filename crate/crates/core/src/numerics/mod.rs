//! Dense real linear algebra shared by the rest of the crate.

mod cmx;
mod eigen;
mod fwht;
mod matrix;
mod random;

pub use cmx::{load_cmx1, read_cmx1, save_cmx1, write_cmx1, CMX1_MAGIC};
pub use eigen::{sym_eig, sym_eig_jacobi, sym_eig_tridiagonal, sym_eig_vectors, Spectrum};
pub use fwht::{fwht, is_power_of_two};
pub use matrix::{dot, norm, DenseMatrix};
pub use random::{derive_seed, gaussian_matrix, gaussian_vector, seeded_rng};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NumericsError {
    #[error("length {0} is not a power of two")]
    NonPowerOfTwoLength(usize),
    #[error("matrix is {rows}x{cols}, expected square")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: String, found: String },
    #[error("matrix dimensions must be at least 1x1, got {rows}x{cols}")]
    EmptyMatrix { rows: usize, cols: usize },
    #[error("standard deviation must be positive and finite, got {0}")]
    InvalidStddev(f64),
    #[error("bad magic bytes in matrix file")]
    BadMagic,
    #[error("matrix file truncated")]
    Truncated,
    #[error("matrix file declares {0} entries, above the size limit")]
    Oversize(u128),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, NumericsError>;
