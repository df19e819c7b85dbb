//! Least-squares / ridge problems `F(w) = ½‖Xw − y‖² + (λ/2)‖w‖²`.

use std::fs;
use std::ops::Range;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::numerics::{
    dot, gaussian_matrix, gaussian_vector, load_cmx1, norm, save_cmx1, sym_eig, sym_eig_vectors,
    DenseMatrix, NumericsError,
};

#[derive(Debug, Error)]
pub enum ProblemError {
    #[error("need n > p >= 1, got n={n}, p={p}")]
    BadShape { n: usize, p: usize },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("system is singular (smallest eigenvalue {0:e})")]
    SingularSystem(f64),
    #[error("{count} rows cannot be split into {m} equal ranges")]
    IndivisibleRows { count: usize, m: usize },
    #[error("ridge weight must be finite and nonnegative, got {0}")]
    BadLambda(f64),
    #[error("malformed problem sidecar: {0}")]
    BadSidecar(String),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, ProblemError>;

#[derive(Debug, Clone)]
pub struct QuadraticProblem {
    x: DenseMatrix,
    y: Vec<f64>,
    lambda: f64,
    seed: u64,
    mu: f64,
    big_m: f64,
}

impl QuadraticProblem {
    pub fn new(x: DenseMatrix, y: Vec<f64>, lambda: f64, seed: u64) -> Result<Self> {
        if y.len() != x.rows() {
            return Err(ProblemError::DimensionMismatch {
                expected: x.rows(),
                found: y.len(),
            });
        }
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(ProblemError::BadLambda(lambda));
        }
        let spectrum = sym_eig(&x.gram())?;
        Ok(Self {
            mu: spectrum.min().max(0.0),
            big_m: spectrum.max(),
            x,
            y,
            lambda,
            seed,
        })
    }

    pub fn x(&self) -> &DenseMatrix {
        &self.x
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn n(&self) -> usize {
        self.x.rows()
    }

    pub fn p(&self) -> usize {
        self.x.cols()
    }

    /// `λ_min(XᵀX)`.
    pub fn mu(&self) -> f64 {
        self.mu
    }

    /// `λ_max(XᵀX)`.
    pub fn big_m(&self) -> f64 {
        self.big_m
    }

    pub fn with_lambda(&self, lambda: f64) -> Result<Self> {
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(ProblemError::BadLambda(lambda));
        }
        Ok(Self {
            lambda,
            ..self.clone()
        })
    }

    /// Appends zero rows so that `X` has `rows` rows; the objective is unchanged.
    pub fn padded(&self, rows: usize) -> Result<Self> {
        if rows < self.n() {
            return Err(ProblemError::DimensionMismatch {
                expected: self.n(),
                found: rows,
            });
        }
        let mut data = self.x.data().to_vec();
        data.resize(rows * self.p(), 0.0);
        let mut y = self.y.clone();
        y.resize(rows, 0.0);
        Ok(Self {
            x: DenseMatrix::new(rows, self.p(), data)?,
            y,
            ..self.clone()
        })
    }

    /// `XᵀX + λI`.
    pub fn hessian(&self) -> DenseMatrix {
        let mut h = self.x.gram();
        h.add_diagonal(self.lambda);
        h
    }

    fn check_len(&self, w: &[f64]) -> Result<()> {
        if w.len() != self.p() {
            return Err(ProblemError::DimensionMismatch {
                expected: self.p(),
                found: w.len(),
            });
        }
        Ok(())
    }

    fn residual(&self, w: &[f64]) -> Vec<f64> {
        let mut r = self.x.matvec(w).expect("length checked");
        for (ri, yi) in r.iter_mut().zip(&self.y) {
            *ri -= yi;
        }
        r
    }

    pub fn objective(&self, w: &[f64]) -> Result<f64> {
        self.check_len(w)?;
        let r = self.residual(w);
        Ok(0.5 * dot(&r, &r) + 0.5 * self.lambda * dot(w, w))
    }

    pub fn gradient(&self, w: &[f64]) -> Result<Vec<f64>> {
        self.check_len(w)?;
        let mut g = self.x.tmatvec(&self.residual(w)).expect("length checked");
        for (gi, wi) in g.iter_mut().zip(w) {
            *gi += self.lambda * wi;
        }
        Ok(g)
    }
}

/// Synthetic instance with `X_ij ~ N(0, 1)` and `y_i ~ N(0, p)`.
///
/// Wide shapes (`n ≤ p`) are accepted only with a ridge term.
pub fn gen_synthetic(n: usize, p: usize, lambda: f64, seed: u64) -> Result<QuadraticProblem> {
    if p == 0 || n == 0 || (n <= p && lambda == 0.0) {
        return Err(ProblemError::BadShape { n, p });
    }
    let x = gaussian_matrix(n, p, 1.0, crate::numerics::derive_seed(seed, 0))?;
    let y = gaussian_vector(n, (p as f64).sqrt(), crate::numerics::derive_seed(seed, 1))?;
    QuadraticProblem::new(x, y, lambda, seed)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceSolution {
    pub w_star: Vec<f64>,
    pub f_star: f64,
}

/// `w* = (XᵀX + λI)⁻¹Xᵀy` through a symmetric eigendecomposition.
pub fn solve_reference(prob: &QuadraticProblem) -> Result<ReferenceSolution> {
    let (spectrum, q) = sym_eig_vectors(&prob.hessian())?;
    let floor = 1e-12 * spectrum.max().abs().max(1.0);
    if spectrum.min() <= floor {
        return Err(ProblemError::SingularSystem(spectrum.min()));
    }
    let rhs = prob.x.tmatvec(&prob.y).expect("y has n entries");
    let coeffs = q.tmatvec(&rhs).expect("square");
    let scaled: Vec<f64> = coeffs
        .iter()
        .zip(spectrum.values())
        .map(|(c, l)| c / l)
        .collect();
    let w_star = q.matvec(&scaled).expect("square");
    let f_star = prob.objective(&w_star)?;
    Ok(ReferenceSolution { w_star, f_star })
}

/// `m` contiguous equal ranges covering `0..count`.
pub fn partition_rows(count: usize, m: usize) -> Result<Vec<Range<usize>>> {
    if m == 0 || !count.is_multiple_of(m) {
        return Err(ProblemError::IndivisibleRows { count, m });
    }
    let size = count / m;
    Ok((0..m).map(|i| i * size..(i + 1) * size).collect())
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

/// Writes `<prefix>.X.cmx`, `<prefix>.y.cmx` and `<prefix>.meta`.
pub fn save_problem(prob: &QuadraticProblem, prefix: impl AsRef<Path>) -> Result<()> {
    let prefix = prefix.as_ref();
    save_cmx1(with_suffix(prefix, ".X.cmx"), &prob.x)?;
    save_cmx1(
        with_suffix(prefix, ".y.cmx"),
        &DenseMatrix::column_vector(&prob.y)?,
    )?;
    fs::write(
        with_suffix(prefix, ".meta"),
        format!("lambda={};seed={}\n", prob.lambda, prob.seed),
    )?;
    Ok(())
}

pub fn load_problem(prefix: impl AsRef<Path>) -> Result<QuadraticProblem> {
    let prefix = prefix.as_ref();
    let x = load_cmx1(with_suffix(prefix, ".X.cmx"))?;
    let y = load_cmx1(with_suffix(prefix, ".y.cmx"))?;
    if y.cols() != 1 {
        return Err(ProblemError::DimensionMismatch {
            expected: 1,
            found: y.cols(),
        });
    }
    let meta = fs::read_to_string(with_suffix(prefix, ".meta"))?;
    let (mut lambda, mut seed) = (None, None);
    for field in meta.trim().split(';').filter(|f| !f.is_empty()) {
        let bad = || ProblemError::BadSidecar(field.to_string());
        let (k, v) = field.split_once('=').ok_or_else(bad)?;
        match k {
            "lambda" => lambda = Some(v.parse::<f64>().map_err(|_| bad())?),
            "seed" => seed = Some(v.parse::<u64>().map_err(|_| bad())?),
            _ => return Err(bad()),
        }
    }
    QuadraticProblem::new(
        x,
        y.into_data(),
        lambda.ok_or_else(|| ProblemError::BadSidecar("missing lambda".into()))?,
        seed.ok_or_else(|| ProblemError::BadSidecar("missing seed".into()))?,
    )
}

/// Euclidean norm of the gradient at `w`.
pub fn gradient_norm(prob: &QuadraticProblem, w: &[f64]) -> Result<f64> {
    Ok(norm(&prob.gradient(w)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn scalar(x: f64, y: f64, lambda: f64) -> QuadraticProblem {
        QuadraticProblem::new(DenseMatrix::from_rows(&[vec![x]]).unwrap(), vec![y], lambda, 0).unwrap()
    }

    #[test]
    fn scalar_examples() {
        let prob = scalar(2.0, 4.0, 0.0);
        assert_eq!(prob.objective(&[1.0]).unwrap(), 2.0);
        assert_eq!(prob.gradient(&[1.0]).unwrap(), vec![-4.0]);
        assert!(prob.objective(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn objective_matches_summation() {
        let prob = gen_synthetic(30, 5, 0.7, 3).unwrap();
        let w = gaussian_vector(5, 1.0, 4).unwrap();
        let mut total = 0.0;
        for i in 0..30 {
            let mut r = -prob.y()[i];
            for j in 0..5 {
                r += prob.x().get(i, j) * w[j];
            }
            total += 0.5 * r * r;
        }
        total += 0.5 * 0.7 * w.iter().map(|v| v * v).sum::<f64>();
        let f = prob.objective(&w).unwrap();
        assert!((f - total).abs() <= 1e-12 * total.abs());
    }

    #[test]
    fn synthetic_is_deterministic_and_well_posed() {
        let a = gen_synthetic(40, 6, 0.0, 9).unwrap();
        let b = gen_synthetic(40, 6, 0.0, 9).unwrap();
        assert_eq!(a.x(), b.x());
        assert_eq!(a.y(), b.y());
        for seed in 0..10 {
            assert!(gen_synthetic(512, 64, 0.0, seed).unwrap().mu() > 0.0);
        }
        assert!(matches!(
            gen_synthetic(4, 4, 0.0, 0),
            Err(ProblemError::BadShape { .. })
        ));
    }

    #[test]
    fn reference_solutions() {
        let y = vec![1.0, -2.0, 3.5];
        let prob = QuadraticProblem::new(DenseMatrix::identity(3), y.clone(), 0.0, 0).unwrap();
        let sol = solve_reference(&prob).unwrap();
        for (a, b) in sol.w_star.iter().zip(&y) {
            assert!((a - b).abs() < 1e-12);
        }

        let base = gen_synthetic(20, 4, 0.0, 1).unwrap();
        let norms: Vec<f64> = [1.0, 10.0, 100.0]
            .iter()
            .map(|&l| norm(&solve_reference(&base.with_lambda(l).unwrap()).unwrap().w_star))
            .collect();
        assert!(norms[0] > norms[1] && norms[1] > norms[2]);

        let sol = solve_reference(&base).unwrap();
        let xty = norm(&base.x().tmatvec(base.y()).unwrap());
        assert!(gradient_norm(&base, &sol.w_star).unwrap() <= 1e-8 * (1.0 + xty));

        let singular = QuadraticProblem::new(DenseMatrix::zeros(3, 2), vec![1.0; 3], 0.0, 0).unwrap();
        assert!(matches!(
            solve_reference(&singular),
            Err(ProblemError::SingularSystem(_))
        ));
    }

    #[test]
    fn reference_matches_long_gradient_descent() {
        let prob = QuadraticProblem::new(
            DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![0.5, -1.0], vec![3.0, 0.25]]).unwrap(),
            vec![1.0, 2.0, -1.0],
            0.0,
            0,
        )
        .unwrap();
        let step = 1.0 / prob.big_m();
        let mut w = vec![0.0; 2];
        for _ in 0..20_000 {
            let g = prob.gradient(&w).unwrap();
            for (wi, gi) in w.iter_mut().zip(g) {
                *wi -= step * gi;
            }
        }
        let sol = solve_reference(&prob).unwrap();
        for (a, b) in sol.w_star.iter().zip(&w) {
            assert!((a - b).abs() <= 1e-6);
        }
    }

    #[test]
    fn partitions() {
        assert_eq!(partition_rows(8, 4).unwrap(), vec![0..2, 2..4, 4..6, 6..8]);
        assert!(partition_rows(6, 4).is_err());
        let parts = partition_rows(60, 12).unwrap();
        let mut covered = vec![0; 60];
        for r in parts {
            for i in r {
                covered[i] += 1;
            }
        }
        assert!(covered.iter().all(|&c| c == 1));
    }

    #[test]
    fn padding_preserves_objective() {
        let prob = gen_synthetic(10, 3, 0.2, 5).unwrap();
        let padded = prob.padded(16).unwrap();
        let w = [0.1, -0.4, 2.0];
        assert_eq!(padded.n(), 16);
        assert!((padded.objective(&w).unwrap() - prob.objective(&w).unwrap()).abs() < 1e-12);
        assert!((padded.mu() - prob.mu()).abs() < 1e-9);
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let prefix = dir.path().join("prob");
        let prob = gen_synthetic(12, 3, 0.05, 77).unwrap();
        save_problem(&prob, &prefix).unwrap();
        let back = load_problem(&prefix).unwrap();
        assert_eq!(back.x(), prob.x());
        assert_eq!(back.y(), prob.y());
        assert_eq!(back.lambda(), 0.05);
        assert_eq!(back.seed(), 77);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn gradient_matches_finite_differences(seed in any::<u64>(), lambda in 0.0f64..2.0) {
            let prob = gen_synthetic(12, 4, lambda, seed).unwrap();
            let w = gaussian_vector(4, 1.0, seed ^ 0x55).unwrap();
            let g = prob.gradient(&w).unwrap();
            let h = 1e-5;
            for j in 0..4 {
                let mut wp = w.clone();
                let mut wm = w.clone();
                wp[j] += h;
                wm[j] -= h;
                let fd = (prob.objective(&wp).unwrap() - prob.objective(&wm).unwrap()) / (2.0 * h);
                prop_assert!((fd - g[j]).abs() <= 1e-6 * (1.0 + g[j].abs()));
            }
        }

        #[test]
        fn strong_convexity_surrogate(seed in any::<u64>(), probe in any::<u64>()) {
            let prob = gen_synthetic(15, 3, 0.0, seed).unwrap();
            let sol = solve_reference(&prob).unwrap();
            let w = gaussian_vector(3, 2.0, probe).unwrap();
            let gap = prob.objective(&w).unwrap() - sol.f_star;
            let dist: f64 = w.iter().zip(&sol.w_star).map(|(a, b)| (a - b).powi(2)).sum();
            prop_assert!(gap >= 0.5 * prob.mu() * dist - 1e-9 * (1.0 + sol.f_star.abs()));
        }
    }
}
