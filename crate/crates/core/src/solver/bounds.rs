use super::{Result, SolverError};
use crate::numerics::{dot, norm, sym_eig, DenseMatrix};

/// Constants entering the convergence bounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundParams {
    pub kappa: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    pub c1: f64,
    pub c2: f64,
    pub f0: f64,
    pub f_star: f64,
}

pub fn kappa(epsilon: f64) -> f64 {
    (1.0 + epsilon) / (1.0 - epsilon)
}

/// `γ₁ = 1 − 4μζ(1−ζ)/(M(1+ε))`.
pub fn gamma1(mu: f64, big_m: f64, zeta: f64, epsilon: f64) -> f64 {
    1.0 - 4.0 * mu * zeta * (1.0 - zeta) / (big_m * (1.0 + epsilon))
}

/// `γ₂ = 1 − 4μc₁c₂/(M(c₁+c₂)²)`.
pub fn gamma2(mu: f64, big_m: f64, c1: f64, c2: f64) -> f64 {
    1.0 - 4.0 * mu * c1 * c2 / (big_m * (c1 + c2).powi(2))
}

impl BoundParams {
    pub fn for_gd(mu: f64, big_m: f64, zeta: f64, epsilon: f64, f0: f64, f_star: f64) -> Self {
        Self {
            kappa: kappa(epsilon),
            gamma1: gamma1(mu, big_m, zeta, epsilon),
            gamma2: f64::NAN,
            c1: f64::NAN,
            c2: f64::NAN,
            f0,
            f_star,
        }
    }

    pub fn for_lbfgs(mu: f64, big_m: f64, epsilon: f64, c1: f64, c2: f64, f0: f64, f_star: f64) -> Self {
        Self {
            kappa: kappa(epsilon),
            gamma1: f64::NAN,
            gamma2: gamma2(mu, big_m, c1, c2),
            c1,
            c2,
            f0,
            f_star,
        }
    }

    pub fn rate1(&self) -> f64 {
        self.kappa * self.gamma1
    }

    pub fn rate2(&self) -> f64 {
        self.kappa * self.gamma2
    }
}

fn linear_bound(kappa: f64, gamma: f64, f0: f64, f_star: f64, t: usize) -> Result<f64> {
    let rate = kappa * gamma;
    if !(kappa >= 1.0) || !(rate < 1.0) || !rate.is_finite() {
        return Err(SolverError::NoGuarantee { rate });
    }
    Ok(rate.powi(t as i32) * f0 + kappa * kappa * (kappa - gamma) / (1.0 - rate) * f_star)
}

/// `(κγ₁)ᵗf₀ + κ²(κ−γ₁)/(1−κγ₁)·f(w*)`.
pub fn theorem1_bound(params: &BoundParams, t: usize) -> Result<f64> {
    linear_bound(params.kappa, params.gamma1, params.f0, params.f_star, t)
}

/// `(κγ₂)ᵗf₀ + κ²(κ−γ₂)/(1−κγ₂)·f(w*)`.
pub fn theorem2_bound(params: &BoundParams, t: usize) -> Result<f64> {
    linear_bound(params.kappa, params.gamma2, params.f0, params.f_star, t)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotationCheck {
    pub ratio: f64,
    pub bound: f64,
    pub holds: bool,
}

/// Checks `uᵀMu/‖Mu‖ ≥ 2√κ/(κ+1)` for unit `u` and positive definite `M`.
pub fn rotation_bound_check(m: &DenseMatrix, u: &[f64]) -> Result<RotationCheck> {
    let spectrum = sym_eig(m)?;
    if spectrum.min() <= 0.0 {
        return Err(SolverError::NotPositiveDefinite);
    }
    if u.len() != m.rows() {
        return Err(SolverError::DimensionMismatch {
            expected: m.rows(),
            found: u.len(),
        });
    }
    let nu = norm(u);
    let unit: Vec<f64> = u.iter().map(|x| x / nu).collect();
    let mu = m.matvec(&unit)?;
    let ratio = dot(&unit, &mu) / norm(&mu);
    let kappa = spectrum.max() / spectrum.min();
    let bound = 2.0 * kappa.sqrt() / (kappa + 1.0);
    Ok(RotationCheck {
        ratio,
        bound,
        holds: ratio >= bound - 1e-12,
    })
}

/// Closed form `κγᵗf₀ + (κ−γ)/(1−κγ)·f̄` for the recursion
/// `f_{t+1} ≤ κγf_t + (κ−γ)f̄`.
pub fn linear_recursion_majorant(kappa: f64, gamma: f64, f0: f64, f_bar: f64, t: usize) -> f64 {
    let rate = kappa * gamma;
    rate.powi(t as i32) * f0 + (kappa - gamma) / (1.0 - rate) * f_bar
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{gaussian_matrix, gaussian_vector};
    use proptest::prelude::*;

    #[test]
    fn theorem1_special_cases() {
        let p = BoundParams::for_gd(1.0, 4.0, 0.5, 0.0, 10.0, 2.0);
        assert_eq!(p.kappa, 1.0);
        for t in 0..5 {
            let want = p.gamma1.powi(t as i32) * 10.0 + 2.0;
            assert!((theorem1_bound(&p, t).unwrap() - want).abs() < 1e-12);
        }
        let p = BoundParams::for_gd(1.0, 4.0, 0.5, 0.1, 10.0, 2.0);
        assert!(theorem1_bound(&p, 0).unwrap() >= 10.0);
        let mut prev = f64::INFINITY;
        for t in 0..50 {
            let b = theorem1_bound(&p, t).unwrap();
            assert!(b <= prev);
            prev = b;
        }
        let vacuous = BoundParams::for_gd(1.0, 4.0, 1.0, 0.1, 10.0, 2.0);
        assert!(matches!(
            theorem1_bound(&vacuous, 3),
            Err(SolverError::NoGuarantee { .. })
        ));
    }

    #[test]
    fn theorem2_special_cases() {
        let p = BoundParams::for_lbfgs(1.0, 4.0, 0.0, 0.3, 0.3, 10.0, 2.0);
        assert!((p.gamma2 - (1.0 - 0.25)).abs() < 1e-15);
        let g = BoundParams::for_gd(1.0, 4.0, 0.5, 0.0, 10.0, 2.0);
        for t in 0..10 {
            assert!((theorem2_bound(&p, t).unwrap() - theorem1_bound(&g, t).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn rotation_extremal_angle() {
        assert!(rotation_bound_check(&DenseMatrix::identity(3), &[0.0, 1.0, 0.0]).unwrap().holds);
        for kappa in [1.5f64, 4.0, 100.0] {
            let m = DenseMatrix::from_diagonal(&[1.0, kappa]);
            // u at half the extremal angle φ = arccos((κ−1)/(κ+1)).
            let phi = ((kappa - 1.0) / (kappa + 1.0)).acos();
            let theta = 0.5 * phi;
            let c = rotation_bound_check(&m, &[theta.cos(), theta.sin()]).unwrap();
            assert!((c.ratio - c.bound).abs() <= 1e-9, "κ={kappa}");
        }
        assert!(matches!(
            rotation_bound_check(&DenseMatrix::from_diagonal(&[1.0, -1.0]), &[1.0, 0.0]),
            Err(SolverError::NotPositiveDefinite)
        ));
    }

    #[test]
    fn linear_recursion_lemma() {
        for (kappa, gamma) in [(1.1f64, 0.8f64), (1.0, 0.5), (1.3, 0.7)] {
            let (f0, f_bar) = (50.0, 3.0);
            let mut f = f0;
            for t in 0..60 {
                assert!(f <= linear_recursion_majorant(kappa, gamma, f0, f_bar, t) * (1.0 + 1e-12));
                f = kappa * gamma * f + (kappa - gamma) * f_bar;
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn rotation_bound_holds(seed in any::<u64>(), dim in 2usize..21) {
            let a = gaussian_matrix(dim, dim, 1.0, seed).unwrap();
            let mut m = a.gram();
            m.add_diagonal(1e-3);
            let u = gaussian_vector(dim, 1.0, seed ^ 0xabc).unwrap();
            prop_assert!(rotation_bound_check(&m, &u).unwrap().holds);
        }
    }
}
