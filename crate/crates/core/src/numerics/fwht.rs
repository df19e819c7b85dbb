use super::{NumericsError, Result};

pub fn is_power_of_two(n: usize) -> bool {
    n != 0 && n & (n - 1) == 0
}

/// Unnormalized in-place Walsh–Hadamard transform in Sylvester (natural)
/// ordering: `v <- H v`. Applying it twice multiplies by `v.len()`.
pub fn fwht(v: &mut [f64]) -> Result<()> {
    let n = v.len();
    if !is_power_of_two(n) {
        return Err(NumericsError::NonPowerOfTwoLength(n));
    }
    let mut h = 1;
    while h < n {
        for block in v.chunks_mut(2 * h) {
            let (lo, hi) = block.split_at_mut(h);
            for (a, b) in lo.iter_mut().zip(hi.iter_mut()) {
                let (x, y) = (*a, *b);
                *a = x + y;
                *b = x - y;
            }
        }
        h *= 2;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    // Explicit Sylvester matrix entry.
    fn h(i: usize, j: usize) -> f64 {
        if (i & j).count_ones().is_multiple_of(2) {
            1.0
        } else {
            -1.0
        }
    }

    #[test]
    fn small_examples() {
        let mut a = [1.0, 0.0, 0.0, 0.0];
        fwht(&mut a).unwrap();
        assert_eq!(a, [1.0, 1.0, 1.0, 1.0]);
        let mut b = [1.0, 1.0, 1.0, 1.0];
        fwht(&mut b).unwrap();
        assert_eq!(b, [4.0, 0.0, 0.0, 0.0]);
        let mut c = [1.0, 2.0, 3.0, 4.0];
        let direct: Vec<f64> = (0..4)
            .map(|i| (0..4).map(|j| h(i, j) * c[j]).sum())
            .collect();
        fwht(&mut c).unwrap();
        assert_eq!(c.to_vec(), direct);
        assert_eq!(c, [10.0, -2.0, -4.0, 0.0]);
        let mut one = [5.0];
        fwht(&mut one).unwrap();
        assert_eq!(one, [5.0]);
    }

    #[test]
    fn rejects_bad_lengths() {
        assert!(fwht(&mut [1.0, 2.0, 3.0]).is_err());
        assert!(fwht(&mut []).is_err());
    }

    proptest! {
        #[test]
        fn self_inverse_up_to_scale(q in 0u32..10, seed in any::<u64>()) {
            use rand::Rng;
            let n = 1usize << q;
            let mut rng = crate::numerics::seeded_rng(seed);
            let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let mut w = v.clone();
            fwht(&mut w).unwrap();
            fwht(&mut w).unwrap();
            for (a, b) in w.iter().zip(&v) {
                prop_assert!((a - n as f64 * b).abs() <= 1e-12 * n as f64);
            }
        }
    }
}
