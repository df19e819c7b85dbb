use std::collections::VecDeque;

use super::{Result, SolverError};
use crate::numerics::{dot, norm, DenseMatrix};

/// Initial matrix of the inverse-Hessian recursion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InitialScaling {
    /// `(rᵀu / rᵀr)·I`, the inverse-curvature scale.
    #[default]
    Inverse,
    /// `(rᵀr / rᵀu)·I`.
    Literal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairOutcome {
    Stored,
    /// `u = 0` or `rᵀu ≤ 1e−14·‖r‖‖u‖`; memory unchanged.
    Rejected,
}

/// Ring buffer of curvature pairs `(u, r)`, oldest first.
#[derive(Debug, Clone)]
pub struct LbfgsMemory {
    capacity: usize,
    pairs: VecDeque<(Vec<f64>, Vec<f64>)>,
    scaling: InitialScaling,
}

impl LbfgsMemory {
    pub fn new(capacity: usize, scaling: InitialScaling) -> Self {
        Self {
            capacity: capacity.max(1),
            pairs: VecDeque::with_capacity(capacity.max(1)),
            scaling,
        }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn pairs(&self) -> impl Iterator<Item = (&[f64], &[f64])> {
        self.pairs.iter().map(|(u, r)| (u.as_slice(), r.as_slice()))
    }

    pub fn push(&mut self, u: Vec<f64>, r: Vec<f64>) -> PairOutcome {
        let ru = dot(&r, &u);
        let nu = norm(&u);
        if nu == 0.0 || !ru.is_finite() || ru <= 1e-14 * norm(&r) * nu {
            log::debug!("discarding curvature pair with rᵀu = {ru:e}");
            return PairOutcome::Rejected;
        }
        if self.pairs.len() == self.capacity {
            self.pairs.pop_front();
        }
        self.pairs.push_back((u, r));
        PairOutcome::Stored
    }

    /// Scalar of the initial matrix, from the newest pair; 1 when empty.
    pub fn initial_scale(&self) -> f64 {
        match self.pairs.back() {
            None => 1.0,
            Some((u, r)) => {
                let ru = dot(r, u);
                let rr = dot(r, r);
                match self.scaling {
                    InitialScaling::Inverse => ru / rr,
                    InitialScaling::Literal => rr / ru,
                }
            }
        }
    }

    /// Hessian-form initial scalar `rᵀr / rᵀu` of the newest pair.
    pub fn hessian_initial_scale(&self) -> Option<f64> {
        self.pairs.back().map(|(u, r)| dot(r, r) / dot(r, u))
    }

    /// `d = −B g` by the two-loop recursion.
    pub fn direction(&self, g: &[f64]) -> Result<Vec<f64>> {
        if !g.iter().all(|v| v.is_finite()) {
            return Err(SolverError::NonFiniteInput);
        }
        let mut q = g.to_vec();
        let mut alphas = Vec::with_capacity(self.pairs.len());
        for (u, r) in self.pairs.iter().rev() {
            let rho = 1.0 / dot(r, u);
            let a = rho * dot(u, &q);
            for (qi, ri) in q.iter_mut().zip(r) {
                *qi -= a * ri;
            }
            alphas.push((rho, a));
        }
        let gamma = self.initial_scale();
        q.iter_mut().for_each(|x| *x *= gamma);
        for ((u, r), (rho, a)) in self.pairs.iter().zip(alphas.into_iter().rev()) {
            let b = rho * dot(r, &q);
            for (qi, ui) in q.iter_mut().zip(u) {
                *qi += (a - b) * ui;
            }
        }
        q.iter_mut().for_each(|x| *x = -*x);
        Ok(q)
    }

    /// Explicit `B` from `B ← VᵀBV + ρuuᵀ`, `V = I − ρruᵀ`, oldest pair first.
    pub fn materialize(&self, p: usize) -> DenseMatrix {
        let mut b = DenseMatrix::identity(p);
        b.scale(self.initial_scale());
        for (u, r) in &self.pairs {
            let rho = 1.0 / dot(r, u);
            let v = DenseMatrix::from_fn(p, p, |i, j| {
                (if i == j { 1.0 } else { 0.0 }) - rho * r[i] * u[j]
            });
            let mut next = v.transpose().matmul(&b).unwrap().matmul(&v).unwrap();
            for i in 0..p {
                for j in 0..p {
                    let x = next.get(i, j) + rho * u[i] * u[j];
                    next.set(i, j, x);
                }
            }
            b = next;
        }
        let bt = b.transpose();
        b.add(&bt).expect("square").scaled(0.5)
    }
}

/// Explicit inverse-Hessian estimate used for `d = −B g̃`.
pub fn materialize_hessian_estimate(memory: &LbfgsMemory, p: usize) -> DenseMatrix {
    memory.materialize(p)
}
