use rand::seq::index::sample;

use super::{EncodingError, EncodingMatrix, Result};
use crate::numerics::{seeded_rng, sym_eig, DenseMatrix, Spectrum};
use crate::par;

/// Welch lower bound on the coherence of `frame_size` unit vectors in `R^dim`.
pub fn welch_bound(frame_size: usize, dim: usize) -> f64 {
    if frame_size <= dim || frame_size < 2 {
        return 0.0;
    }
    let (big_n, n) = (frame_size as f64, dim as f64);
    ((big_n - n) / (n * (big_n - 1.0))).sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameDiagnostics {
    pub coherence: f64,
    /// Smallest off-diagonal magnitude; equals `coherence` for an ETF.
    pub min_cross_correlation: f64,
    pub welch_bound: f64,
    pub tight_residual: f64,
    pub is_tight: bool,
    pub redundancy: f64,
}

pub fn frame_diagnostics(s: &EncodingMatrix) -> FrameDiagnostics {
    let dense = s.materialize();
    let beta = s.beta();
    let mut gram = dense.gram();
    gram.add_diagonal(-beta);
    let tight_residual = gram.max_abs();

    let norms: Vec<f64> = (0..dense.rows())
        .map(|i| crate::numerics::norm(dense.row(i)))
        .collect();
    let outer = dense.outer_gram();
    let rows = dense.rows();
    let mut coherence = 0.0f64;
    let mut min_cross = f64::INFINITY;
    for i in 0..rows {
        if norms[i] == 0.0 {
            continue;
        }
        for j in 0..i {
            if norms[j] == 0.0 {
                continue;
            }
            let c = outer.get(i, j).abs() / (norms[i] * norms[j]);
            coherence = coherence.max(c);
            min_cross = min_cross.min(c);
        }
    }
    if !min_cross.is_finite() {
        min_cross = 0.0;
    }
    FrameDiagnostics {
        coherence,
        min_cross_correlation: min_cross,
        welch_bound: welch_bound(s.rows(), s.n()),
        tight_residual,
        is_tight: tight_residual <= 1e-9,
        redundancy: beta,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GramNormalization {
    Raw,
    /// Divide by `βη`, `η = |A|/m`.
    PerEta,
}

/// Subset Grams `S_AᵀS_A` over the `m` row blocks of a materialized `S`.
#[derive(Debug, Clone)]
pub struct SubsetGramOracle {
    s: DenseMatrix,
    m: usize,
    block: usize,
    beta: f64,
    tight: bool,
}

impl SubsetGramOracle {
    pub fn new(enc: &EncodingMatrix, m: usize) -> Result<Self> {
        Self::from_dense(enc.materialize(), enc.beta(), m)
    }

    pub fn from_dense(s: DenseMatrix, beta: f64, m: usize) -> Result<Self> {
        if m == 0 || !s.rows().is_multiple_of(m) {
            return Err(EncodingError::IndivisibleRows { rows: s.rows(), m });
        }
        let mut g = s.gram();
        g.add_diagonal(-beta);
        let tight = g.max_abs() <= 1e-9;
        Ok(Self {
            block: s.rows() / m,
            s,
            m,
            beta,
            tight,
        })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.s.cols()
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn dense(&self) -> &DenseMatrix {
        &self.s
    }

    fn normalize_subset(&self, subset: &[usize]) -> Result<Vec<usize>> {
        if subset.is_empty() {
            return Err(EncodingError::EmptySubset);
        }
        let mut a = subset.to_vec();
        a.sort_unstable();
        a.dedup();
        if let Some(&bad) = a.iter().find(|&&i| i >= self.m) {
            return Err(EncodingError::SubsetOutOfRange { node: bad, m: self.m });
        }
        Ok(a)
    }

    fn rows_of(&self, nodes: &[usize]) -> DenseMatrix {
        let idx: Vec<usize> = nodes
            .iter()
            .flat_map(|&i| i * self.block..(i + 1) * self.block)
            .collect();
        self.s.select_rows(&idx).expect("indices in range")
    }

    /// The stacked rows `S_A`.
    pub fn subset_rows(&self, subset: &[usize]) -> Result<DenseMatrix> {
        Ok(self.rows_of(&self.normalize_subset(subset)?))
    }

    pub fn gram(&self, subset: &[usize]) -> Result<DenseMatrix> {
        Ok(self.subset_rows(subset)?.gram())
    }

    fn scale_for(&self, count: usize, norm: GramNormalization) -> f64 {
        match norm {
            GramNormalization::Raw => 1.0,
            GramNormalization::PerEta => 1.0 / (self.beta * count as f64 / self.m as f64),
        }
    }

    /// Eigenvalues of the `n x n` Gram computed directly.
    pub fn spectrum_direct(&self, subset: &[usize], norm: GramNormalization) -> Result<Spectrum> {
        let a = self.normalize_subset(subset)?;
        let g = self.rows_of(&a).gram();
        Ok(sym_eig(&g)?.scaled(self.scale_for(a.len(), norm)))
    }

    /// Eigenvalues of `S_AᵀS_A`, reduced to the smallest equivalent problem:
    /// `S_A S_Aᵀ` padded with zeros when `S_A` is short, or `βI − S_CᵀS_C`
    /// through the complement `C` when `S` is tight and `S_C` is short.
    pub fn spectrum(&self, subset: &[usize], norm: GramNormalization) -> Result<Spectrum> {
        let a = self.normalize_subset(subset)?;
        let n = self.n();
        let scale = self.scale_for(a.len(), norm);
        let kept = a.len() * self.block;
        let dropped = self.s.rows() - kept;
        let smallest = n.min(kept).min(if self.tight { dropped } else { usize::MAX });
        let values = if smallest == n {
            sym_eig(&self.rows_of(&a).gram())?.into_values()
        } else if smallest == kept {
            let mut v = sym_eig(&self.rows_of(&a).outer_gram())?.into_values();
            v.resize(n, 0.0);
            v
        } else {
            let complement: Vec<usize> = (0..self.m).filter(|i| a.binary_search(i).is_err()).collect();
            let mut v = if complement.is_empty() {
                Vec::new()
            } else {
                sym_eig(&self.rows_of(&complement).outer_gram())?
                    .values()
                    .iter()
                    .map(|&x| self.beta - x)
                    .collect()
            };
            v.resize(n, self.beta);
            v
        };
        Ok(Spectrum::from_unsorted(values).scaled(scale))
    }
}

pub fn subset_gram(s: &EncodingMatrix, subset: &[usize], m: usize) -> Result<DenseMatrix> {
    SubsetGramOracle::new(s, m)?.gram(subset)
}

pub fn subset_gram_spectrum(
    s: &EncodingMatrix,
    subset: &[usize],
    m: usize,
    norm: GramNormalization,
) -> Result<Spectrum> {
    SubsetGramOracle::new(s, m)?.spectrum(subset, norm)
}

/// `max(λ_max − 1, 1 − λ_min, 0)` of a normalized spectrum.
pub fn epsilon_of_spectrum(spectrum: &Spectrum) -> f64 {
    (spectrum.max() - 1.0).max(1.0 - spectrum.min()).max(0.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialExtremes {
    pub subset: Vec<usize>,
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone)]
pub struct SpectralEstimate {
    pub epsilon_hat: f64,
    pub trials: Vec<TrialExtremes>,
    /// Normalized eigenvalues pooled over every sampled subset.
    pub pooled: Vec<f64>,
    pub eta: f64,
    pub subset_size: usize,
}

impl SpectralEstimate {
    /// `(lower edge, upper edge, count)` for `bins` equal-width bins.
    pub fn histogram(&self, bins: usize) -> Vec<(f64, f64, usize)> {
        let bins = bins.max(1);
        let lo = self.pooled.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = self.pooled.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if !lo.is_finite() {
            return Vec::new();
        }
        let width = if hi > lo { (hi - lo) / bins as f64 } else { 1.0 };
        let mut counts = vec![0usize; bins];
        for &x in &self.pooled {
            let b = (((x - lo) / width) as usize).min(bins - 1);
            counts[b] += 1;
        }
        counts
            .into_iter()
            .enumerate()
            .map(|(b, c)| (lo + b as f64 * width, lo + (b + 1) as f64 * width, c))
            .collect()
    }
}

/// Empirical ε over `trials` random k-subsets plus the first and last `k` nodes.
pub fn estimate_epsilon(
    s: &EncodingMatrix,
    m: usize,
    k: usize,
    trials: usize,
    seed: u64,
) -> Result<SpectralEstimate> {
    let oracle = SubsetGramOracle::new(s, m)?;
    estimate_epsilon_with(&oracle, k, trials, seed)
}

pub fn estimate_epsilon_with(
    oracle: &SubsetGramOracle,
    k: usize,
    trials: usize,
    seed: u64,
) -> Result<SpectralEstimate> {
    let m = oracle.m();
    if k == 0 || k > m {
        return Err(EncodingError::BadSubsetSize { k, m });
    }
    let mut rng = seeded_rng(seed);
    let mut subsets: Vec<Vec<usize>> = (0..trials.max(1))
        .map(|_| {
            let mut a = sample(&mut rng, m, k).into_vec();
            a.sort_unstable();
            a
        })
        .collect();
    subsets.push((0..k).collect());
    subsets.push((m - k..m).collect());

    let spectra = par::map_slice(&subsets, |a| oracle.spectrum(a, GramNormalization::PerEta));
    let mut trials_out = Vec::with_capacity(subsets.len());
    let mut pooled = Vec::new();
    let mut epsilon_hat = 0.0f64;
    for (a, spec) in subsets.into_iter().zip(spectra) {
        let spec = spec?;
        epsilon_hat = epsilon_hat.max(epsilon_of_spectrum(&spec));
        trials_out.push(TrialExtremes {
            subset: a,
            min: spec.min(),
            max: spec.max(),
        });
        pooled.extend_from_slice(spec.values());
    }
    Ok(SpectralEstimate {
        epsilon_hat,
        trials: trials_out,
        pooled,
        eta: k as f64 / m as f64,
        subset_size: k,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoding::{
        build_fwht_subsampled, build_gaussian, build_identity, build_paley_etf, build_replication,
        build_steiner_etf, FwhtOptions,
    };
    use proptest::prelude::*;

    #[test]
    fn etf_coherence_meets_welch() {
        let d = frame_diagnostics(&build_paley_etf(13).unwrap());
        assert!((d.coherence - 1.0 / 13f64.sqrt()).abs() <= 1e-9);
        assert!((d.coherence - d.welch_bound).abs() <= 1e-9);
        assert!((d.min_cross_correlation - d.coherence).abs() <= 1e-9);
        assert!(d.is_tight);

        let d = frame_diagnostics(&build_steiner_etf(4).unwrap());
        assert!((d.welch_bound - 1.0 / 3.0).abs() <= 1e-12);
        assert!((d.coherence - 1.0 / 3.0).abs() <= 1e-9);
        assert!((d.min_cross_correlation - d.coherence).abs() <= 1e-9);

        let d = frame_diagnostics(&build_identity(5));
        assert_eq!(d.coherence, 0.0);
        assert!(d.is_tight);
    }

    #[test]
    fn fwht_frames_respect_welch() {
        for seed in 0..5 {
            let s = build_fwht_subsampled(24, 2.0, seed, FwhtOptions::default()).unwrap();
            let d = frame_diagnostics(&s);
            assert!(d.is_tight);
            assert!(d.coherence >= d.welch_bound - 1e-12);
        }
    }

    #[test]
    fn full_subset_of_tight_frame_is_identity() {
        let s = build_paley_etf(29).unwrap();
        let all: Vec<usize> = (0..5).collect();
        let spec = subset_gram_spectrum(&s, &all, 5, GramNormalization::PerEta).unwrap();
        assert!(spec.values().iter().all(|&x| (x - 1.0).abs() <= 1e-9));
    }

    #[test]
    fn paley_bulk_eigenvalues() {
        // n = 19, 38 rows over m = 19 nodes, beta = 2.
        let s = build_paley_etf(37).unwrap();
        let oracle = SubsetGramOracle::new(&s, 19).unwrap();
        let mut rng = seeded_rng(5);
        for k in 10..=19 {
            // n(1 − β(1 − η)) with n = m = 19, β = 2.
            let bulk = 19 - 2 * (19 - k);
            for _ in 0..5 {
                let a = sample(&mut rng, 19, k).into_vec();
                let spec = oracle.spectrum_direct(&a, GramNormalization::Raw).unwrap();
                let count = spec.scaled(0.5).count_near(1.0, 1e-8);
                assert!(count >= bulk, "k={k}: {count} < {bulk}");
            }
        }
    }

    #[test]
    fn gaussian_subset_edges() {
        let s = build_gaussian(200, 3.0, 21).unwrap();
        let a: Vec<usize> = (0..10).collect();
        let spec = subset_gram_spectrum(&s, &a, 20, GramNormalization::PerEta).unwrap();
        let r = (1.0f64 / 1.5).sqrt();
        assert!((spec.min() - (1.0 - r).powi(2)).abs() <= 0.15, "{}", spec.min());
        assert!((spec.max() - (1.0 + r).powi(2)).abs() <= 0.15, "{}", spec.max());
    }

    #[test]
    fn gaussian_full_gram_edges() {
        // Marchenko–Pastur edges for aspect ratio 1/2.
        let s = build_gaussian(200, 2.0, 8).unwrap();
        let spec = subset_gram_spectrum(&s, &[0], 1, GramNormalization::PerEta).unwrap();
        let r = 0.5f64.sqrt();
        assert!((spec.min() - (1.0 - r).powi(2)).abs() <= 0.15);
        assert!((spec.max() - (1.0 + r).powi(2)).abs() <= 0.15);
        assert!(epsilon_of_spectrum(&spec) <= (1.0 + r).powi(2) - 1.0 + 0.15);
    }

    #[test]
    fn epsilon_estimates() {
        let e = estimate_epsilon(&build_identity(8), 4, 4, 3, 0).unwrap();
        assert!(e.epsilon_hat.abs() <= 1e-12);

        let s = build_fwht_subsampled(64, 2.0, 17, FwhtOptions::default()).unwrap();
        let e = estimate_epsilon(&s, 16, 12, 20, 1).unwrap();
        assert_eq!(e.trials.len(), 22);
        assert_eq!(e.pooled.len(), 22 * 64);
        assert!(e.epsilon_hat >= 0.0);
        assert_eq!(e.histogram(10).iter().map(|b| b.2).sum::<usize>(), e.pooled.len());

        // Replication with m = 4, β = 2: nodes 0 and 2 hold the same partition,
        // so {0, 2} never sees partition 1.
        let s = build_replication(8, 2, 4).unwrap();
        let oracle = SubsetGramOracle::new(&s, 4).unwrap();
        let spec = oracle.spectrum(&[0, 2], GramNormalization::PerEta).unwrap();
        assert!((epsilon_of_spectrum(&spec) - 1.0).abs() <= 1e-12);
        let e = estimate_epsilon(&s, 4, 2, 30, 3).unwrap();
        assert!((e.epsilon_hat - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn subset_errors() {
        let s = build_identity(6);
        assert!(matches!(
            subset_gram_spectrum(&s, &[], 3, GramNormalization::Raw),
            Err(EncodingError::EmptySubset)
        ));
        assert!(matches!(
            subset_gram_spectrum(&s, &[0], 4, GramNormalization::Raw),
            Err(EncodingError::IndivisibleRows { .. })
        ));
        assert!(matches!(
            subset_gram_spectrum(&s, &[3], 3, GramNormalization::Raw),
            Err(EncodingError::SubsetOutOfRange { .. })
        ));
        assert!(estimate_epsilon(&s, 3, 4, 1, 0).is_err());
    }

    fn random_subset(bits: u32, m: usize) -> Vec<usize> {
        let a: Vec<usize> = (0..m).filter(|i| bits >> i & 1 == 1).collect();
        if a.is_empty() {
            vec![0]
        } else {
            a
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn reduced_spectrum_matches_direct(seed in any::<u64>(), bits in any::<u32>(), gaussian in any::<bool>()) {
            let s = if gaussian {
                build_gaussian(24, 2.0, seed).unwrap()
            } else {
                build_fwht_subsampled(24, 2.0, seed, FwhtOptions { sign_flip: true, row_shuffle: true }).unwrap()
            };
            let oracle = SubsetGramOracle::new(&s, 8).unwrap();
            let a = random_subset(bits, 8);
            let fast = oracle.spectrum(&a, GramNormalization::Raw).unwrap();
            let slow = oracle.spectrum_direct(&a, GramNormalization::Raw).unwrap();
            for (x, y) in fast.values().iter().zip(slow.values()) {
                prop_assert!((x - y).abs() <= 1e-9);
            }
        }

        #[test]
        fn adding_a_node_never_lowers_eigenvalues(seed in any::<u64>(), bits in any::<u32>(), extra in 0usize..8) {
            let s = build_gaussian(12, 2.0, seed).unwrap();
            let oracle = SubsetGramOracle::new(&s, 8).unwrap();
            let a = random_subset(bits, 8);
            let mut b = a.clone();
            b.push(extra);
            let small = oracle.spectrum_direct(&a, GramNormalization::Raw).unwrap();
            let large = oracle.spectrum_direct(&b, GramNormalization::Raw).unwrap();
            for (x, y) in small.values().iter().zip(large.values()) {
                prop_assert!(*y >= *x - 1e-10);
            }
        }
    }
}
