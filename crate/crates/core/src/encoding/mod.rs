//! Encoding matrices `S` (tight frames, fast transforms, random and
//! replication codes), their application to data, and spectral diagnostics.

mod construct;
mod diagnostics;
mod io;
mod partition;

pub use construct::{
    build_fwht_subsampled, build_gaussian, build_hadamard, build_identity, build_paley_conference,
    build_paley_etf, build_replication, build_scheme, build_steiner_etf, is_prime, smallest_paley_prime_for,
    smallest_steiner_order_for, steiner_block_columns, steiner_block_columns_closed_form,
    steiner_column_pairs, steiner_construction, FwhtOptions, SteinerConstruction,
};
pub use diagnostics::{
    epsilon_of_spectrum, estimate_epsilon, estimate_epsilon_with, frame_diagnostics, subset_gram, subset_gram_spectrum,
    welch_bound, FrameDiagnostics, GramNormalization, SpectralEstimate, SubsetGramOracle,
};
pub use io::{load_encoding, parse_sidecar, save_encoding, sidecar_line, Sidecar};
pub use partition::{encode_problem, EncodedPartition};

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::numerics::{fwht, DenseMatrix, NumericsError};
use crate::par;

#[derive(Debug, Error)]
pub enum EncodingError {
    #[error("{0} is not a power of two")]
    NonPowerOfTwo(usize),
    #[error("Steiner order {0} is below the minimum of 4")]
    TooSmall(usize),
    #[error("{0} is not prime")]
    NotPrime(u64),
    #[error("{0} is not congruent to 1 mod 4")]
    WrongResidueClass(u64),
    #[error("block index {i} out of range 1..={v}")]
    IndexOutOfRange { i: usize, v: usize },
    #[error("redundancy factor {0} must be at least 1")]
    BadBeta(f64),
    #[error("divisibility requirement violated: {0}")]
    Divisibility(String),
    #[error("node subset is empty")]
    EmptySubset,
    #[error("{rows} encoded rows cannot be split into {m} equal blocks")]
    IndivisibleRows { rows: usize, m: usize },
    #[error("node {node} out of range for {m} nodes")]
    SubsetOutOfRange { node: usize, m: usize },
    #[error("subset size k={k} must satisfy 1 <= k <= m={m}")]
    BadSubsetSize { k: usize, m: usize },
    #[error("data has {found} rows but the encoding expects {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("unknown encoding scheme `{0}`")]
    UnknownScheme(String),
    #[error("malformed sidecar header: {0}")]
    BadSidecar(String),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, EncodingError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scheme {
    Identity,
    Replication,
    Gaussian,
    FwhtSubsampled,
    PaleyEtf,
    SteinerEtf,
}

impl Scheme {
    pub fn tag(self) -> &'static str {
        match self {
            Scheme::Identity => "identity",
            Scheme::Replication => "replication",
            Scheme::Gaussian => "gaussian",
            Scheme::FwhtSubsampled => "fwht_subsampled",
            Scheme::PaleyEtf => "paley_etf",
            Scheme::SteinerEtf => "steiner_etf",
        }
    }

    /// Schemes constructed to satisfy `SᵀS = βI` exactly.
    pub fn is_tight_by_construction(self) -> bool {
        !matches!(self, Scheme::Gaussian)
    }

    pub fn is_etf(self) -> bool {
        matches!(self, Scheme::PaleyEtf | Scheme::SteinerEtf)
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Scheme {
    type Err = EncodingError;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "identity" | "uncoded" => Scheme::Identity,
            "replication" => Scheme::Replication,
            "gaussian" => Scheme::Gaussian,
            "fwht_subsampled" | "fwht" | "hadamard" => Scheme::FwhtSubsampled,
            "paley_etf" | "paley" => Scheme::PaleyEtf,
            "steiner_etf" | "steiner" => Scheme::SteinerEtf,
            other => return Err(EncodingError::UnknownScheme(other.to_string())),
        })
    }
}

/// How `S` is stored and applied.
#[derive(Debug, Clone)]
pub enum Representation {
    Dense(DenseMatrix),
    Identity,
    /// `copies` vertically stacked identities.
    Replicated { copies: usize },
    /// `S = π(H_N P D) / √n`: input row `j` lands at transform position
    /// `positions[j]` with sign `signs[j]`, and output row `r` is transform
    /// row `row_order[r]`.
    Fwht {
        order: usize,
        positions: Vec<usize>,
        signs: Option<Vec<f64>>,
        row_order: Option<Vec<usize>>,
    },
    /// Block `i` places the Hadamard columns `h_2..h_v` on the input rows
    /// `blocks[i]`.
    Steiner { v: usize, blocks: Vec<Vec<usize>> },
}

/// An encoding matrix `S` of shape `rows x n`, `rows = βn`.
#[derive(Debug, Clone)]
pub struct EncodingMatrix {
    scheme: Scheme,
    n: usize,
    rows: usize,
    seed: u64,
    repr: Representation,
}

impl EncodingMatrix {
    pub(crate) fn from_parts(
        scheme: Scheme,
        n: usize,
        rows: usize,
        seed: u64,
        repr: Representation,
    ) -> Self {
        Self {
            scheme,
            n,
            rows,
            seed,
            repr,
        }
    }

    /// Wraps an arbitrary dense `S` under the given scheme tag.
    pub fn from_dense(scheme: Scheme, s: DenseMatrix, seed: u64) -> Result<Self> {
        if s.rows() < s.cols() {
            return Err(EncodingError::BadBeta(s.rows() as f64 / s.cols() as f64));
        }
        Ok(Self {
            scheme,
            n: s.cols(),
            rows: s.rows(),
            seed,
            repr: Representation::Dense(s),
        })
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    /// Number of original data rows.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of encoded rows, `βn`.
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn beta(&self) -> f64 {
        self.rows as f64 / self.n as f64
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn representation(&self) -> &Representation {
        &self.repr
    }

    /// Whether `apply` avoids a dense product.
    pub fn has_fast_path(&self) -> bool {
        !matches!(self.repr, Representation::Dense(_))
    }

    /// Number of stacked copies for replication layouts.
    pub fn replication_copies(&self) -> Option<usize> {
        match self.repr {
            Representation::Replicated { copies } => Some(copies),
            _ => None,
        }
    }

    pub fn materialize(&self) -> DenseMatrix {
        match &self.repr {
            Representation::Dense(s) => s.clone(),
            _ => self
                .apply(&DenseMatrix::identity(self.n))
                .expect("identity has matching row count"),
        }
    }

    /// `S X` using the fast path when one exists.
    pub fn apply(&self, x: &DenseMatrix) -> Result<DenseMatrix> {
        if x.rows() != self.n {
            return Err(EncodingError::DimensionMismatch {
                expected: self.n,
                found: x.rows(),
            });
        }
        let p = x.cols();
        match &self.repr {
            Representation::Dense(s) => Ok(s.matmul(x)?),
            Representation::Identity => Ok(x.clone()),
            Representation::Replicated { copies } => {
                let blocks = vec![x; *copies];
                Ok(DenseMatrix::vstack(&blocks)?)
            }
            Representation::Fwht {
                order,
                positions,
                signs,
                row_order,
            } => {
                let scale = 1.0 / (self.n as f64).sqrt();
                let cols = par::map_range(p, |c| {
                    let mut z = vec![0.0; *order];
                    for (j, &pos) in positions.iter().enumerate() {
                        let sgn = signs.as_ref().map_or(1.0, |s| s[j]);
                        z[pos] = sgn * x.get(j, c);
                    }
                    fwht(&mut z).expect("order is a power of two");
                    z
                });
                let mut out = DenseMatrix::zeros(self.rows, p);
                for (c, z) in cols.iter().enumerate() {
                    for r in 0..self.rows {
                        let src = row_order.as_ref().map_or(r, |o| o[r]);
                        out.set(r, c, scale * z[src]);
                    }
                }
                Ok(out)
            }
            Representation::Steiner { v, blocks } => {
                let v = *v;
                let scale = 1.0 / ((v - 1) as f64).sqrt();
                let encoded = par::map_slice(blocks, |cols_i| {
                    let mut block = vec![0.0; v * p];
                    let mut z = vec![0.0; v];
                    for c in 0..p {
                        z[0] = 0.0;
                        for (j, &row) in cols_i.iter().enumerate() {
                            z[j + 1] = x.get(row, c);
                        }
                        fwht(&mut z).expect("v is a power of two");
                        for r in 0..v {
                            block[r * p + c] = scale * z[r];
                        }
                    }
                    block
                });
                Ok(DenseMatrix::new(self.rows, p, encoded.concat())?)
            }
        }
    }

    /// `S y` for a single vector.
    pub fn apply_vector(&self, y: &[f64]) -> Result<Vec<f64>> {
        let col = DenseMatrix::column_vector(y).map_err(|_| EncodingError::DimensionMismatch {
            expected: self.n,
            found: y.len(),
        })?;
        Ok(self.apply(&col)?.into_data())
    }
}
