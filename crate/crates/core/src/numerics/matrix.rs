use std::fmt;
use std::ops::Range;

use super::{NumericsError, Result};
use crate::par;

/// Row-major dense matrix of `f64`.
#[derive(Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for DenseMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "DenseMatrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows.min(8) {
            writeln!(f, "  {:?}", &self.row(i)[..self.cols.min(8)])?;
        }
        write!(f, "]")
    }
}

// Rows per work item in the parallel Gram/product kernels. Fixed so that the
// reduction tree does not depend on the number of threads.
const ROW_CHUNK: usize = 64;

impl DenseMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(NumericsError::EmptyMatrix { rows, cols });
        }
        if data.len() != rows * cols {
            return Err(NumericsError::DimensionMismatch {
                expected: format!("{} entries", rows * cols),
                found: format!("{} entries", data.len()),
            });
        }
        Ok(Self { rows, cols, data })
    }

    /// # Panics
    /// Panics if either dimension is zero.
    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "matrix dimensions must be positive");
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let n = diag.len();
        let mut m = Self::zeros(n, n);
        for (i, &d) in diag.iter().enumerate() {
            m.data[i * n + i] = d;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Self::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m.data[i * cols + j] = f(i, j);
            }
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            if row.len() != c {
                return Err(NumericsError::DimensionMismatch {
                    expected: format!("{c} columns"),
                    found: format!("{} columns", row.len()),
                });
            }
            data.extend_from_slice(row);
        }
        Self::new(r, c, data)
    }

    /// A single column `n x 1`.
    pub fn column_vector(v: &[f64]) -> Result<Self> {
        Self::new(v.len(), 1, v.to_vec())
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        t
    }

    /// Rows `range` as a new matrix.
    pub fn row_block(&self, range: Range<usize>) -> Result<Self> {
        if range.start >= range.end || range.end > self.rows {
            return Err(NumericsError::DimensionMismatch {
                expected: format!("row range within 0..{}", self.rows),
                found: format!("{range:?}"),
            });
        }
        Self::new(
            range.len(),
            self.cols,
            self.data[range.start * self.cols..range.end * self.cols].to_vec(),
        )
    }

    pub fn select_rows(&self, idx: &[usize]) -> Result<Self> {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            if i >= self.rows {
                return Err(NumericsError::DimensionMismatch {
                    expected: format!("row index < {}", self.rows),
                    found: i.to_string(),
                });
            }
            data.extend_from_slice(self.row(i));
        }
        Self::new(idx.len(), self.cols, data)
    }

    pub fn vstack(blocks: &[&DenseMatrix]) -> Result<Self> {
        let cols = blocks.first().map_or(0, |b| b.cols);
        let mut data = Vec::new();
        let mut rows = 0;
        for b in blocks {
            if b.cols != cols {
                return Err(NumericsError::DimensionMismatch {
                    expected: format!("{cols} columns"),
                    found: format!("{} columns", b.cols),
                });
            }
            rows += b.rows;
            data.extend_from_slice(&b.data);
        }
        Self::new(rows, cols, data)
    }

    /// `self * other`.
    pub fn matmul(&self, other: &DenseMatrix) -> Result<Self> {
        if self.cols != other.rows {
            return Err(NumericsError::DimensionMismatch {
                expected: format!("{} rows on the right operand", self.cols),
                found: format!("{}", other.rows),
            });
        }
        let (n, k, c) = (self.rows, self.cols, other.cols);
        let mut out = Self::zeros(n, c);
        par::for_each_chunk_mut(&mut out.data, ROW_CHUNK * c, |ci, chunk| {
            let row0 = ci * ROW_CHUNK;
            for (r, out_row) in chunk.chunks_mut(c).enumerate() {
                let a = self.row(row0 + r);
                for (kk, &aik) in a.iter().enumerate().take(k) {
                    if aik == 0.0 {
                        continue;
                    }
                    let b = other.row(kk);
                    for (o, &bv) in out_row.iter_mut().zip(b) {
                        *o += aik * bv;
                    }
                }
            }
        });
        Ok(out)
    }

    /// `self * v`.
    pub fn matvec(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.cols {
            return Err(NumericsError::DimensionMismatch {
                expected: format!("vector of length {}", self.cols),
                found: v.len().to_string(),
            });
        }
        Ok((0..self.rows).map(|i| dot(self.row(i), v)).collect())
    }

    /// `selfᵀ * v`.
    pub fn tmatvec(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.rows {
            return Err(NumericsError::DimensionMismatch {
                expected: format!("vector of length {}", self.rows),
                found: v.len().to_string(),
            });
        }
        let mut out = vec![0.0; self.cols];
        for (i, &vi) in v.iter().enumerate() {
            if vi == 0.0 {
                continue;
            }
            for (o, &a) in out.iter_mut().zip(self.row(i)) {
                *o += a * vi;
            }
        }
        Ok(out)
    }

    /// `selfᵀ * self`, a `cols x cols` symmetric matrix.
    pub fn gram(&self) -> Self {
        let c = self.cols;
        let chunks = self.rows.div_ceil(ROW_CHUNK);
        let partials = par::map_range(chunks, |ci| {
            let mut g = vec![0.0; c * c];
            let end = ((ci + 1) * ROW_CHUNK).min(self.rows);
            for i in ci * ROW_CHUNK..end {
                let r = self.row(i);
                for a in 0..c {
                    let ra = r[a];
                    if ra == 0.0 {
                        continue;
                    }
                    let ga = &mut g[a * c..(a + 1) * c];
                    for b in a..c {
                        ga[b] += ra * r[b];
                    }
                }
            }
            g
        });
        let mut g = vec![0.0; c * c];
        for p in partials {
            for (x, y) in g.iter_mut().zip(p) {
                *x += y;
            }
        }
        for a in 0..c {
            for b in 0..a {
                g[a * c + b] = g[b * c + a];
            }
        }
        Self {
            rows: c,
            cols: c,
            data: g,
        }
    }

    /// `self * selfᵀ`, a `rows x rows` symmetric matrix.
    pub fn outer_gram(&self) -> Self {
        let n = self.rows;
        let mut g = Self::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let v = dot(self.row(i), self.row(j));
                g.data[i * n + j] = v;
                g.data[j * n + i] = v;
            }
        }
        g
    }

    pub fn scale(&mut self, s: f64) {
        self.data.iter_mut().for_each(|x| *x *= s);
    }

    pub fn scaled(&self, s: f64) -> Self {
        let mut m = self.clone();
        m.scale(s);
        m
    }

    pub fn add_diagonal(&mut self, s: f64) {
        let n = self.rows.min(self.cols);
        for i in 0..n {
            self.data[i * self.cols + i] += s;
        }
    }

    pub fn add(&self, other: &DenseMatrix) -> Result<Self> {
        self.check_same_shape(other)?;
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect();
        Self::new(self.rows, self.cols, data)
    }

    pub fn sub(&self, other: &DenseMatrix) -> Result<Self> {
        self.check_same_shape(other)?;
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        Self::new(self.rows, self.cols, data)
    }

    fn check_same_shape(&self, other: &DenseMatrix) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(NumericsError::DimensionMismatch {
                expected: format!("{:?}", self.shape()),
                found: format!("{:?}", other.shape()),
            });
        }
        Ok(())
    }

    pub fn frobenius_norm(&self) -> f64 {
        norm(&self.data)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    /// Largest elementwise difference; infinite when the shapes differ.
    pub fn max_abs_diff(&self, other: &DenseMatrix) -> f64 {
        if self.shape() != other.shape() {
            return f64::INFINITY;
        }
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    pub fn trace(&self) -> f64 {
        (0..self.rows.min(self.cols)).map(|i| self.get(i, i)).sum()
    }

    /// Largest `|a_ij - a_ji|`; infinite for non-square input.
    pub fn max_asymmetry(&self) -> f64 {
        if self.rows != self.cols {
            return f64::INFINITY;
        }
        let n = self.rows;
        let mut m: f64 = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                m = m.max((self.get(i, j) - self.get(j, i)).abs());
            }
        }
        m
    }

    /// Cholesky factor `L` with `LLᵀ = self`, or `None` when a pivot falls
    /// at or below `tol * max_diag`.
    pub fn cholesky(&self, tol: f64) -> Option<Self> {
        if self.rows != self.cols {
            return None;
        }
        let n = self.rows;
        let max_diag = (0..n).map(|i| self.get(i, i)).fold(0.0_f64, f64::max);
        if max_diag <= 0.0 {
            return None;
        }
        let mut l = Self::zeros(n, n);
        for j in 0..n {
            let lj = &l.data[j * n..j * n + j];
            let d = self.get(j, j) - dot(lj, lj);
            if d <= tol * max_diag {
                return None;
            }
            let djj = d.sqrt();
            l.data[j * n + j] = djj;
            for i in j + 1..n {
                let s = self.get(i, j) - dot(&l.data[i * n..i * n + j], &l.data[j * n..j * n + j]);
                l.data[i * n + j] = s / djj;
            }
        }
        Some(l)
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
