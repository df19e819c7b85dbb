use super::{EncodingError, EncodingMatrix, Result};
use crate::numerics::{dot, DenseMatrix};

/// One worker's encoded rows `(SᵢX, Sᵢy)`.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedPartition {
    pub node: usize,
    pub x: DenseMatrix,
    pub y: Vec<f64>,
}

impl EncodedPartition {
    pub fn new(node: usize, x: DenseMatrix, y: Vec<f64>) -> Result<Self> {
        if x.rows() != y.len() {
            return Err(EncodingError::DimensionMismatch {
                expected: x.rows(),
                found: y.len(),
            });
        }
        Ok(Self { node, x, y })
    }

    pub fn rows(&self) -> usize {
        self.x.rows()
    }

    pub fn cols(&self) -> usize {
        self.x.cols()
    }

    fn residual(&self, w: &[f64]) -> Vec<f64> {
        let mut r = self.x.matvec(w).expect("w has length p");
        for (ri, yi) in r.iter_mut().zip(&self.y) {
            *ri -= yi;
        }
        r
    }

    /// `X̃ᵢᵀ(X̃ᵢw − ỹᵢ)`.
    pub fn gradient(&self, w: &[f64]) -> Vec<f64> {
        self.x.tmatvec(&self.residual(w)).expect("residual has length rows")
    }

    /// `‖X̃ᵢd‖²`.
    pub fn curvature(&self, d: &[f64]) -> f64 {
        let xd = self.x.matvec(d).expect("d has length p");
        dot(&xd, &xd)
    }

    /// `½‖X̃ᵢw − ỹᵢ‖²`.
    pub fn objective(&self, w: &[f64]) -> f64 {
        let r = self.residual(w);
        0.5 * dot(&r, &r)
    }
}

/// Encodes `(X, y)` and splits the result into `m` equal row blocks.
pub fn encode_problem(
    s: &EncodingMatrix,
    x: &DenseMatrix,
    y: &[f64],
    m: usize,
) -> Result<Vec<EncodedPartition>> {
    if x.rows() != s.n() {
        return Err(EncodingError::DimensionMismatch {
            expected: s.n(),
            found: x.rows(),
        });
    }
    if y.len() != s.n() {
        return Err(EncodingError::DimensionMismatch {
            expected: s.n(),
            found: y.len(),
        });
    }
    if m == 0 || !s.rows().is_multiple_of(m) {
        return Err(EncodingError::IndivisibleRows { rows: s.rows(), m });
    }
    let p = x.cols();
    let augmented = DenseMatrix::from_fn(x.rows(), p + 1, |i, j| if j < p { x.get(i, j) } else { y[i] });
    let encoded = s.apply(&augmented)?;
    let block = s.rows() / m;
    (0..m)
        .map(|node| {
            let rows = node * block..(node + 1) * block;
            let xi = DenseMatrix::from_fn(block, p, |r, c| encoded.get(rows.start + r, c));
            let yi = rows.map(|r| encoded.get(r, p)).collect();
            EncodedPartition::new(node, xi, yi)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoding::{build_fwht_subsampled, build_identity, build_paley_etf, build_steiner_etf, FwhtOptions};
    use crate::numerics::{gaussian_matrix, gaussian_vector};

    #[test]
    fn identity_partitions_are_halves() {
        let x = gaussian_matrix(6, 2, 1.0, 1).unwrap();
        let y = gaussian_vector(6, 1.0, 2).unwrap();
        let parts = encode_problem(&build_identity(6), &x, &y, 2).unwrap();
        assert_eq!(parts[0].x, x.row_block(0..3).unwrap());
        assert_eq!(parts[1].x, x.row_block(3..6).unwrap());
        assert_eq!(parts[1].y, y[3..].to_vec());
    }

    #[test]
    fn steiner_fast_path_matches_dense() {
        let s = build_steiner_etf(4).unwrap();
        let x = gaussian_matrix(6, 3, 1.0, 5).unwrap();
        let y = gaussian_vector(6, 1.0, 6).unwrap();
        let parts = encode_problem(&s, &x, &y, 4).unwrap();
        let dense = s.materialize();
        let sx = dense.matmul(&x).unwrap();
        let sy = dense.matvec(&y).unwrap();
        for part in &parts {
            for r in 0..4 {
                let g = part.node * 4 + r;
                assert!((part.y[r] - sy[g]).abs() <= 1e-10);
                for c in 0..3 {
                    assert!((part.x.get(r, c) - sx.get(g, c)).abs() <= 1e-10);
                }
            }
        }
    }

    #[test]
    fn tight_frames_preserve_gram() {
        let x = gaussian_matrix(19, 4, 1.0, 8).unwrap();
        let y = gaussian_vector(19, 1.0, 9).unwrap();
        for s in [
            build_paley_etf(37).unwrap(),
            build_fwht_subsampled(19, 2.0, 3, FwhtOptions::default()).unwrap(),
        ] {
            let parts = encode_problem(&s, &x, &y, 2).unwrap();
            let blocks: Vec<&DenseMatrix> = parts.iter().map(|p| &p.x).collect();
            let g = DenseMatrix::vstack(&blocks).unwrap().gram();
            let want = x.gram().scaled(s.beta());
            assert!(g.max_abs_diff(&want) <= 1e-8 * want.max_abs());
            // Summed worker gradients equal β times the uncoded gradient.
            let w = vec![0.3, -0.1, 0.7, 0.2];
            let mut total = [0.0; 4];
            for part in &parts {
                for (t, g) in total.iter_mut().zip(part.gradient(&w)) {
                    *t += g;
                }
            }
            let plain = EncodedPartition::new(0, x.clone(), y.clone()).unwrap().gradient(&w);
            for (t, g) in total.iter().zip(plain) {
                assert!((t - s.beta() * g).abs() <= 1e-8 * (1.0 + g.abs()));
            }
        }
    }

    #[test]
    fn rejects_bad_shapes() {
        let s = build_identity(4);
        let x = DenseMatrix::zeros(3, 2);
        assert!(encode_problem(&s, &x, &[0.0; 3], 2).is_err());
        let x = DenseMatrix::zeros(4, 2);
        assert!(encode_problem(&s, &x, &[0.0; 4], 3).is_err());
    }
}
