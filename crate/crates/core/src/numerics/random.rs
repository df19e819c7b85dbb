use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::matrix::DenseMatrix;
use super::{NumericsError, Result};

/// Generator used by every stochastic operation in the crate.
pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Derives an independent child seed for `stream` (SplitMix64 finalizer).
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed
        .wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn normal(stddev: f64) -> Result<Normal<f64>> {
    if !(stddev > 0.0 && stddev.is_finite()) {
        return Err(NumericsError::InvalidStddev(stddev));
    }
    Ok(Normal::new(0.0, stddev).expect("validated stddev"))
}

/// `rows x cols` matrix of i.i.d. `N(0, stddev²)` entries.
pub fn gaussian_matrix(rows: usize, cols: usize, stddev: f64, seed: u64) -> Result<DenseMatrix> {
    let dist = normal(stddev)?;
    let mut rng = seeded_rng(seed);
    let data = (0..rows * cols).map(|_| dist.sample(&mut rng)).collect();
    DenseMatrix::new(rows, cols, data)
}

pub fn gaussian_vector(len: usize, stddev: f64, seed: u64) -> Result<Vec<f64>> {
    let dist = normal(stddev)?;
    let mut rng = seeded_rng(seed);
    Ok((0..len).map(|_| dist.sample(&mut rng)).collect())
}
