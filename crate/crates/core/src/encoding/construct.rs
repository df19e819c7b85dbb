use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::Rng;

use super::{EncodingError, EncodingMatrix, Representation, Result, Scheme};
use crate::numerics::{is_power_of_two, seeded_rng, sym_eig_vectors, DenseMatrix};

/// Sylvester–Hadamard matrix of order `v`.
pub fn build_hadamard(v: usize) -> Result<DenseMatrix> {
    if !is_power_of_two(v) {
        return Err(EncodingError::NonPowerOfTwo(v));
    }
    Ok(DenseMatrix::from_fn(v, v, |i, j| {
        if (i & j).count_ones() % 2 == 0 {
            1.0
        } else {
            -1.0
        }
    }))
}

pub fn build_identity(n: usize) -> EncodingMatrix {
    EncodingMatrix::from_parts(Scheme::Identity, n, n, 0, Representation::Identity)
}

pub fn is_prime(p: u64) -> bool {
    if p < 2 {
        return false;
    }
    let mut d = 2u64;
    while d * d <= p {
        if p.is_multiple_of(d) {
            return false;
        }
        d += 1;
    }
    true
}

/// Symmetric conference matrix of order `p + 1` built from the quadratic
/// character of GF(p), bordered by ones.
pub fn build_paley_conference(p: u64) -> Result<DenseMatrix> {
    if !is_prime(p) {
        return Err(EncodingError::NotPrime(p));
    }
    if p % 4 != 1 {
        return Err(EncodingError::WrongResidueClass(p));
    }
    let q = p as usize;
    let mut residue = vec![false; q];
    for x in 1..q {
        residue[(x * x) % q] = true;
    }
    let order = q + 1;
    Ok(DenseMatrix::from_fn(order, order, |i, j| {
        if i == j {
            0.0
        } else if i == 0 || j == 0 {
            1.0
        } else {
            let diff = (j + q - i) % q;
            if residue[diff] {
                1.0
            } else {
                -1.0
            }
        }
    }))
}

/// Real ETF of `p + 1` unit vectors in `R^{(p+1)/2}`.
pub fn build_paley_etf(p: u64) -> Result<EncodingMatrix> {
    let c = build_paley_conference(p)?;
    let order = c.rows();
    let n = order / 2;
    let mut g = c.scaled(1.0 / (p as f64).sqrt());
    g.add_diagonal(1.0);
    let (spectrum, vectors) = sym_eig_vectors(&g)?;
    debug_assert!(spectrum.values()[n..].iter().all(|&l| (l - 2.0).abs() < 1e-8));
    let scale = 2f64.sqrt();
    let s = DenseMatrix::from_fn(order, n, |i, j| scale * vectors.get(i, order - n + j));
    Ok(EncodingMatrix::from_parts(
        Scheme::PaleyEtf,
        n,
        order,
        p,
        Representation::Dense(s),
    ))
}

/// Smallest prime `p ≡ 1 (mod 4)` whose Paley ETF spans at least `n` dimensions.
pub fn smallest_paley_prime_for(n: usize) -> u64 {
    let mut p = (2 * n as u64).saturating_sub(1).max(5);
    loop {
        if p % 4 == 1 && is_prime(p) {
            return p;
        }
        p += 1;
    }
}

/// Smallest power of two `v ≥ 4` with `v(v−1)/2 ≥ n`.
pub fn smallest_steiner_order_for(n: usize) -> usize {
    let mut v = 4;
    while v * (v - 1) / 2 < n {
        v *= 2;
    }
    v
}

/// The pair design underlying the Steiner ETF.
#[derive(Debug, Clone)]
pub struct SteinerConstruction {
    pub v: usize,
    pub hadamard: DenseMatrix,
    pub incidence: DenseMatrix,
    pub column_pairs: Vec<(usize, usize)>,
}

/// Two-element subsets of `{1..v}` in lexicographic order.
pub fn steiner_column_pairs(v: usize) -> Vec<(usize, usize)> {
    (1..=v)
        .flat_map(|a| (a + 1..=v).map(move |b| (a, b)))
        .collect()
}

fn check_steiner_order(v: usize) -> Result<()> {
    if !is_power_of_two(v) {
        return Err(EncodingError::NonPowerOfTwo(v));
    }
    if v < 4 {
        return Err(EncodingError::TooSmall(v));
    }
    Ok(())
}

pub fn steiner_construction(v: usize) -> Result<SteinerConstruction> {
    check_steiner_order(v)?;
    let column_pairs = steiner_column_pairs(v);
    let mut incidence = DenseMatrix::zeros(v, column_pairs.len());
    for (c, &(a, b)) in column_pairs.iter().enumerate() {
        incidence.set(a - 1, c, 1.0);
        incidence.set(b - 1, c, 1.0);
    }
    Ok(SteinerConstruction {
        v,
        hadamard: build_hadamard(v)?,
        incidence,
        column_pairs,
    })
}

impl SteinerConstruction {
    /// 1-based nonzero columns of incidence row `i` (1-based).
    pub fn block_columns(&self, i: usize) -> Result<Vec<usize>> {
        if i == 0 || i > self.v {
            return Err(EncodingError::IndexOutOfRange { i, v: self.v });
        }
        Ok((0..self.incidence.cols())
            .filter(|&c| self.incidence.get(i - 1, c) != 0.0)
            .map(|c| c + 1)
            .collect())
    }
}

/// 1-based column indices where row `i` of the pair-incidence matrix is one.
pub fn steiner_block_columns(i: usize, v: usize) -> Result<Vec<usize>> {
    steiner_construction(v)?.block_columns(i)
}

/// Closed-form block columns: pairs `(a, i)` with `a < i` followed by the
/// contiguous run of pairs `(i, b)` with `b > i`.
pub fn steiner_block_columns_closed_form(i: usize, v: usize) -> Result<Vec<usize>> {
    check_steiner_order(v)?;
    if i == 0 || i > v {
        return Err(EncodingError::IndexOutOfRange { i, v });
    }
    let offset = |a: usize| (a - 1) * (2 * v - a) / 2;
    let mut cols: Vec<usize> = (1..i).map(|a| offset(a) + i - a).collect();
    cols.extend((1..=v - i).map(|d| offset(i) + d));
    Ok(cols)
}

/// Steiner ETF of `v²` unit vectors in `R^{v(v−1)/2}`.
pub fn build_steiner_etf(v: usize) -> Result<EncodingMatrix> {
    let design = steiner_construction(v)?;
    let blocks = (1..=v)
        .map(|i| {
            design
                .block_columns(i)
                .map(|cols| cols.into_iter().map(|c| c - 1).collect())
        })
        .collect::<Result<Vec<Vec<usize>>>>()?;
    let n = design.column_pairs.len();
    Ok(EncodingMatrix::from_parts(
        Scheme::SteinerEtf,
        n,
        v * v,
        v as u64,
        Representation::Steiner { v, blocks },
    ))
}

/// Both randomizations are on by default. Without the row shuffle the
/// contiguous worker blocks are sequency bands and a single block can be rank
/// deficient on its own.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FwhtOptions {
    /// Random ±1 on each input row before the transform.
    pub sign_flip: bool,
    /// Random permutation of the output rows.
    pub row_shuffle: bool,
}

impl Default for FwhtOptions {
    fn default() -> Self {
        Self {
            sign_flip: true,
            row_shuffle: true,
        }
    }
}

/// Subsampled Hadamard frame: `n` of the `N` transform columns, `N` the
/// smallest power of two at least `βn`.
pub fn build_fwht_subsampled(
    n: usize,
    beta: f64,
    seed: u64,
    options: FwhtOptions,
) -> Result<EncodingMatrix> {
    if !(beta >= 1.0) || !beta.is_finite() || n == 0 {
        return Err(EncodingError::BadBeta(beta));
    }
    let target = (beta * n as f64 - 1e-9).ceil().max(n as f64) as usize;
    let order = target.next_power_of_two();
    let mut rng = seeded_rng(seed);
    let mut positions = sample(&mut rng, order, n).into_vec();
    positions.sort_unstable();
    let signs = options.sign_flip.then(|| {
        (0..n)
            .map(|_| if rng.gen::<bool>() { 1.0 } else { -1.0 })
            .collect()
    });
    let row_order = options.row_shuffle.then(|| {
        let mut perm: Vec<usize> = (0..order).collect();
        perm.shuffle(&mut rng);
        perm
    });
    Ok(EncodingMatrix::from_parts(
        Scheme::FwhtSubsampled,
        n,
        order,
        seed,
        Representation::Fwht {
            order,
            positions,
            signs,
            row_order,
        },
    ))
}

/// I.i.d. Gaussian encoding with entry variance `1/n`.
pub fn build_gaussian(n: usize, beta: f64, seed: u64) -> Result<EncodingMatrix> {
    if !(beta >= 1.0) || !beta.is_finite() || n == 0 {
        return Err(EncodingError::BadBeta(beta));
    }
    let rows = ((beta * n as f64).round() as usize).max(n);
    let s = crate::numerics::gaussian_matrix(rows, n, 1.0 / (n as f64).sqrt(), seed)?;
    Ok(EncodingMatrix::from_parts(
        Scheme::Gaussian,
        n,
        rows,
        seed,
        Representation::Dense(s),
    ))
}

/// `beta` stacked identities; with `m` nodes, node `i` holds partition
/// `i mod (m/β)`.
pub fn build_replication(n: usize, beta: usize, m: usize) -> Result<EncodingMatrix> {
    if beta == 0 {
        return Err(EncodingError::BadBeta(0.0));
    }
    if m == 0 || !m.is_multiple_of(beta) {
        return Err(EncodingError::Divisibility(format!(
            "m={m} must be a positive multiple of beta={beta}"
        )));
    }
    let partitions = m / beta;
    if n == 0 || !n.is_multiple_of(partitions) {
        return Err(EncodingError::Divisibility(format!(
            "n={n} must be divisible by m/beta={partitions}"
        )));
    }
    Ok(EncodingMatrix::from_parts(
        Scheme::Replication,
        n,
        beta * n,
        0,
        Representation::Replicated { copies: beta },
    ))
}

/// Builds `scheme` for `n` data rows and `m` workers.
///
/// Paley and Steiner frames have a fixed redundancy and are sized to the
/// smallest order covering `n`, so their `n()` may exceed the request and
/// `beta` is ignored. Identity requires `beta = 1`, replication an integer.
pub fn build_scheme(scheme: Scheme, n: usize, beta: f64, seed: u64, m: usize) -> Result<EncodingMatrix> {
    match scheme {
        Scheme::Identity if beta == 1.0 => Ok(build_identity(n)),
        Scheme::Identity => Err(EncodingError::BadBeta(beta)),
        Scheme::Replication => {
            if !(beta >= 1.0) || beta.fract() != 0.0 {
                return Err(EncodingError::BadBeta(beta));
            }
            build_replication(n, beta as usize, m)
        }
        Scheme::Gaussian => build_gaussian(n, beta, seed),
        Scheme::FwhtSubsampled => build_fwht_subsampled(n, beta, seed, FwhtOptions::default()),
        Scheme::PaleyEtf => build_paley_etf(smallest_paley_prime_for(n)),
        Scheme::SteinerEtf => build_steiner_etf(smallest_steiner_order_for(n)),
    }
}
