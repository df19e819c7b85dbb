use super::matrix::DenseMatrix;
use super::{NumericsError, Result};

/// Eigenvalues of a symmetric matrix, ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    eigenvalues: Vec<f64>,
}

impl Spectrum {
    pub fn from_unsorted(mut eigenvalues: Vec<f64>) -> Self {
        eigenvalues.sort_by(f64::total_cmp);
        Self { eigenvalues }
    }

    pub fn values(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn into_values(self) -> Vec<f64> {
        self.eigenvalues
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn min(&self) -> f64 {
        self.eigenvalues[0]
    }

    pub fn max(&self) -> f64 {
        self.eigenvalues[self.eigenvalues.len() - 1]
    }

    pub fn sum(&self) -> f64 {
        self.eigenvalues.iter().sum()
    }

    /// `max / min`, infinite when the smallest eigenvalue is not positive.
    pub fn condition_number(&self) -> f64 {
        if self.min() <= 0.0 {
            f64::INFINITY
        } else {
            self.max() / self.min()
        }
    }

    /// Number of eigenvalues within `tol` of `target`.
    pub fn count_near(&self, target: f64, tol: f64) -> usize {
        self.eigenvalues
            .iter()
            .filter(|&&x| (x - target).abs() <= tol)
            .count()
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self::from_unsorted(self.eigenvalues.iter().map(|x| x * s).collect())
    }
}

// Above this order the eigenvalue-only path switches from Jacobi sweeps to
// Householder tridiagonalization followed by implicit QL.
const JACOBI_MAX_ORDER: usize = 96;
const JACOBI_MAX_SWEEPS: usize = 100;
const JACOBI_OFF_TOL: f64 = 1e-12;

fn check_symmetric(m: &DenseMatrix) -> Result<()> {
    if m.rows() != m.cols() {
        return Err(NumericsError::NotSquare {
            rows: m.rows(),
            cols: m.cols(),
        });
    }
    let asym = m.max_asymmetry();
    if asym > 1e-10 * m.max_abs().max(f64::MIN_POSITIVE) {
        return Err(NumericsError::NotSymmetric(asym));
    }
    Ok(())
}

/// All eigenvalues of a symmetric matrix, ascending.
pub fn sym_eig(m: &DenseMatrix) -> Result<Spectrum> {
    if m.rows() > JACOBI_MAX_ORDER {
        sym_eig_tridiagonal(m)
    } else {
        sym_eig_jacobi(m)
    }
}

/// Eigenvalues by cyclic Jacobi rotations, regardless of size.
pub fn sym_eig_jacobi(m: &DenseMatrix) -> Result<Spectrum> {
    check_symmetric(m)?;
    let mut a = symmetrized(m);
    jacobi(&mut a, m.rows(), None);
    Ok(Spectrum::from_unsorted(diagonal(&a, m.rows())))
}

/// Eigenvalues and orthonormal eigenvectors (columns of the returned matrix,
/// in the same ascending order as the spectrum).
pub fn sym_eig_vectors(m: &DenseMatrix) -> Result<(Spectrum, DenseMatrix)> {
    check_symmetric(m)?;
    let n = m.rows();
    let mut a = symmetrized(m);
    let (d, v) = if n > JACOBI_MAX_ORDER {
        let mut reflectors = Vec::new();
        let (mut d, mut e) = tridiagonalize(&mut a, n, Some(&mut reflectors));
        let mut z = accumulate_reflectors(n, &reflectors);
        tql(&mut d, &mut e, Some(&mut z));
        (d, z)
    } else {
        let mut v = DenseMatrix::identity(n).into_data();
        jacobi(&mut a, n, Some(&mut v));
        (diagonal(&a, n), v)
    };
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| d[i].total_cmp(&d[j]));
    let values = order.iter().map(|&i| d[i]).collect();
    let q = DenseMatrix::from_fn(n, n, |r, c| v[r * n + order[c]]);
    Ok((Spectrum { eigenvalues: values }, q))
}

fn symmetrized(m: &DenseMatrix) -> Vec<f64> {
    let n = m.rows();
    let mut a = m.data().to_vec();
    for i in 0..n {
        for j in i + 1..n {
            let s = 0.5 * (a[i * n + j] + a[j * n + i]);
            a[i * n + j] = s;
            a[j * n + i] = s;
        }
    }
    a
}

fn diagonal(a: &[f64], n: usize) -> Vec<f64> {
    (0..n).map(|i| a[i * n + i]).collect()
}

fn off_norm(a: &[f64], n: usize) -> f64 {
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += a[i * n + j] * a[i * n + j];
            }
        }
    }
    s.sqrt()
}

fn jacobi(a: &mut [f64], n: usize, mut v: Option<&mut Vec<f64>>) {
    let fro = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    if fro == 0.0 {
        return;
    }
    let target = JACOBI_OFF_TOL * fro;
    for _ in 0..JACOBI_MAX_SWEEPS {
        if off_norm(a, n) <= target {
            return;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq.abs() <= f64::MIN_POSITIVE {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    if k == p || k == q {
                        continue;
                    }
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    let nkp = c * akp - s * akq;
                    let nkq = s * akp + c * akq;
                    a[k * n + p] = nkp;
                    a[p * n + k] = nkp;
                    a[k * n + q] = nkq;
                    a[q * n + k] = nkq;
                }
                a[p * n + p] = app - t * apq;
                a[q * n + q] = aqq + t * apq;
                a[p * n + q] = 0.0;
                a[q * n + p] = 0.0;
                if let Some(v) = v.as_deref_mut() {
                    for k in 0..n {
                        let vkp = v[k * n + p];
                        let vkq = v[k * n + q];
                        v[k * n + p] = c * vkp - s * vkq;
                        v[k * n + q] = s * vkp + c * vkq;
                    }
                }
            }
        }
    }
    log::warn!("jacobi: sweep limit reached, off-diagonal norm {:e}", off_norm(a, n));
}

/// Eigenvalues via Householder reduction to tridiagonal form and implicit
/// QL iterations with Wilkinson shifts.
pub fn sym_eig_tridiagonal(m: &DenseMatrix) -> Result<Spectrum> {
    check_symmetric(m)?;
    let n = m.rows();
    let mut a = symmetrized(m);
    let (mut d, mut e) = tridiagonalize(&mut a, n, None);
    tql(&mut d, &mut e, None);
    Ok(Spectrum::from_unsorted(d))
}

// Returns diagonal `d` and superdiagonal `e` (e[i] couples i and i+1,
// e[n-1] = 0). Each reflector `(k, v)` is `I − 2vvᵀ` on rows `k+1..n`.
type Reflector = (usize, Vec<f64>);

fn tridiagonalize(a: &mut [f64], n: usize, mut reflectors: Option<&mut Vec<Reflector>>) -> (Vec<f64>, Vec<f64>) {
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    for k in 0..n.saturating_sub(2) {
        let len = n - k - 1;
        let x0 = a[(k + 1) * n + k];
        let mut xnorm2 = 0.0;
        for i in k + 1..n {
            xnorm2 += a[i * n + k] * a[i * n + k];
        }
        let xnorm = xnorm2.sqrt();
        d[k] = a[k * n + k];
        if xnorm == 0.0 {
            e[k] = 0.0;
            continue;
        }
        let alpha = if x0 >= 0.0 { -xnorm } else { xnorm };
        // v = x - alpha e1, normalized
        for (j, i) in (k + 1..n).enumerate() {
            v[j] = a[i * n + k];
        }
        v[0] -= alpha;
        let vn = v[..len].iter().map(|x| x * x).sum::<f64>().sqrt();
        e[k] = alpha;
        if vn == 0.0 {
            continue;
        }
        v[..len].iter_mut().for_each(|x| *x /= vn);
        if let Some(r) = reflectors.as_deref_mut() {
            r.push((k, v[..len].to_vec()));
        }
        // p = A22 v
        for (jr, r) in (k + 1..n).enumerate() {
            let row = &a[r * n + k + 1..r * n + n];
            p[jr] = row.iter().zip(&v[..len]).map(|(x, y)| x * y).sum();
        }
        let kk: f64 = p[..len].iter().zip(&v[..len]).map(|(x, y)| x * y).sum();
        for j in 0..len {
            p[j] -= kk * v[j];
        }
        // A22 -= 2 (v pᵀ + p vᵀ)
        for (jr, r) in (k + 1..n).enumerate() {
            let (vr, pr) = (v[jr], p[jr]);
            let row = &mut a[r * n + k + 1..r * n + n];
            for (jc, x) in row.iter_mut().enumerate() {
                *x -= 2.0 * (vr * p[jc] + pr * v[jc]);
            }
        }
    }
    if n >= 2 {
        d[n - 2] = a[(n - 2) * n + n - 2];
        e[n - 2] = a[(n - 1) * n + n - 2];
    }
    d[n - 1] = a[(n - 1) * n + n - 1];
    e[n - 1] = 0.0;
    (d, e)
}

// Row-major `Q = H_0 H_1 ⋯` so that `A = Q T Qᵀ`.
fn accumulate_reflectors(n: usize, reflectors: &[Reflector]) -> Vec<f64> {
    let mut q = DenseMatrix::identity(n).into_data();
    let mut s = vec![0.0; n];
    for (k, v) in reflectors.iter().rev() {
        let rows = k + 1..n;
        s.iter_mut().for_each(|x| *x = 0.0);
        for (j, r) in rows.clone().enumerate() {
            let row = &q[r * n..r * n + n];
            s.iter_mut().zip(row).for_each(|(acc, x)| *acc += v[j] * x);
        }
        for (j, r) in rows.enumerate() {
            let row = &mut q[r * n..r * n + n];
            row.iter_mut().zip(&s).for_each(|(x, acc)| *x -= 2.0 * v[j] * acc);
        }
    }
    q
}

// Implicit QL on a tridiagonal; rotations are applied to the columns of `z`
// (row-major, n×n) when given.
fn tql(d: &mut [f64], e: &mut [f64], mut z: Option<&mut Vec<f64>>) {
    let n = d.len();
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 60 {
                log::warn!("tql: iteration limit reached at index {l}");
                break;
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
            let mut underflow = false;
            let mut i = m;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    underflow = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                if let Some(z) = z.as_deref_mut() {
                    for k in 0..n {
                        let f = z[k * n + i + 1];
                        z[k * n + i + 1] = s * z[k * n + i] + c * f;
                        z[k * n + i] = c * z[k * n + i] - s * f;
                    }
                }
            }
            if underflow {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
}
