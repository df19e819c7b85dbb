use super::{Result, SolverError};
use crate::numerics::dot;
use crate::straggler::replication_dedupe;

/// A worker reply for one protocol round.
#[derive(Debug, Clone, PartialEq)]
pub struct Reply<T> {
    pub node: usize,
    pub value: T,
    pub arrival_ms: f64,
}

impl<T> Reply<T> {
    pub fn new(node: usize, value: T, arrival_ms: f64) -> Self {
        Self {
            node,
            value,
            arrival_ms,
        }
    }
}

/// The master's scaling rule for fastest-k sums.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aggregator {
    pub m: usize,
    pub beta: f64,
    pub lambda: f64,
    /// Copies per partition for replication layouts; replies are deduplicated.
    pub replication: Option<usize>,
}

impl Aggregator {
    pub fn new(m: usize, beta: f64, lambda: f64, replication: Option<usize>) -> Self {
        Self {
            m,
            beta,
            lambda,
            replication,
        }
    }

    /// Indices into `replies` that contribute; one per partition under replication.
    pub fn select<T>(&self, replies: &[Reply<T>]) -> Result<Vec<usize>> {
        if replies.is_empty() {
            return Err(SolverError::EmptyReplySet);
        }
        match self.replication {
            None => Ok((0..replies.len()).collect()),
            Some(copies) => {
                let arrivals: Vec<(usize, f64)> =
                    replies.iter().map(|r| (r.node, r.arrival_ms)).collect();
                let kept = replication_dedupe(&arrivals, self.m, copies)
                    .map_err(|e| SolverError::BadConfig(e.to_string()))?
                    .kept;
                Ok(kept
                    .iter()
                    .map(|n| replies.iter().position(|r| r.node == *n).expect("kept node replied"))
                    .collect())
            }
        }
    }

    /// `m / (β·count)`, the inverse of `βη` for the contributing replies.
    pub fn scale(&self, count: usize) -> f64 {
        self.m as f64 / (self.beta * count as f64)
    }

    /// `g̃ = (1/(βη))·Σ gᵢ + λw`.
    pub fn gradient(&self, replies: &[Reply<Vec<f64>>], w: &[f64]) -> Result<Vec<f64>> {
        let used = self.select(replies)?;
        let mut g = vec![0.0; w.len()];
        for &i in &used {
            let gi = &replies[i].value;
            if gi.len() != w.len() {
                return Err(SolverError::DimensionMismatch {
                    expected: w.len(),
                    found: gi.len(),
                });
            }
            for (a, b) in g.iter_mut().zip(gi) {
                *a += b;
            }
        }
        let s = self.scale(used.len());
        for (a, wi) in g.iter_mut().zip(w) {
            *a = s * *a + self.lambda * wi;
        }
        Ok(g)
    }

    /// `(1/(βη))·Σ‖X̃ᵢd‖² + λ‖d‖²`.
    pub fn curvature(&self, replies: &[Reply<f64>], d: &[f64]) -> Result<f64> {
        let used = self.select(replies)?;
        let sum: f64 = used.iter().map(|&i| replies[i].value).sum();
        Ok(self.scale(used.len()) * sum + self.lambda * dot(d, d))
    }
}

/// Aggregates raw `(node, gᵢ)` replies without deduplication.
pub fn aggregate_gradient(
    replies: &[(usize, Vec<f64>)],
    m: usize,
    beta: f64,
    lambda: f64,
    w: &[f64],
) -> Result<Vec<f64>> {
    let wrapped: Vec<Reply<Vec<f64>>> = replies
        .iter()
        .map(|(n, g)| Reply::new(*n, g.clone(), 0.0))
        .collect();
    Aggregator::new(m, beta, lambda, None).gradient(&wrapped, w)
}

/// `w − αg̃`.
pub fn gd_step(w: &[f64], g: &[f64], alpha: f64) -> Vec<f64> {
    w.iter().zip(g).map(|(wi, gi)| wi - alpha * gi).collect()
}

/// `α = −ν·dᵀg̃ / curvature`, with `curvature` from [`Aggregator::curvature`].
pub fn exact_line_search(d: &[f64], g: &[f64], curvature: f64, nu: f64) -> Result<f64> {
    if !d.iter().chain(g).all(|v| v.is_finite()) || !curvature.is_finite() {
        return Err(SolverError::NonFiniteInput);
    }
    if curvature <= 0.0 {
        return Err(SolverError::DegenerateDirection);
    }
    Ok(-nu * dot(d, g) / curvature)
}

/// L-BFGS curvature pair from the nodes present in two consecutive rounds.
#[derive(Debug, Clone, PartialEq)]
pub struct OverlapPair {
    pub u: Vec<f64>,
    pub r: Vec<f64>,
    pub overlap: Vec<usize>,
}

/// `u = w_t − w_{t−1}`, `r = (m/(β|O|))·Σ_{i∈O}(gᵢ(w_t) − gᵢ(w_{t−1}))`.
pub fn overlap_pair(
    prev: &[Reply<Vec<f64>>],
    cur: &[Reply<Vec<f64>>],
    m: usize,
    beta: f64,
    w_t: &[f64],
    w_prev: &[f64],
) -> Result<OverlapPair> {
    let mut r = vec![0.0; w_t.len()];
    let mut overlap = Vec::new();
    for c in cur {
        if let Some(p) = prev.iter().find(|p| p.node == c.node) {
            overlap.push(c.node);
            for ((ri, a), b) in r.iter_mut().zip(&c.value).zip(&p.value) {
                *ri += a - b;
            }
        }
    }
    if overlap.is_empty() {
        return Err(SolverError::EmptyOverlap);
    }
    overlap.sort_unstable();
    let s = m as f64 / (beta * overlap.len() as f64);
    r.iter_mut().for_each(|x| *x *= s);
    let u = w_t.iter().zip(w_prev).map(|(a, b)| a - b).collect();
    Ok(OverlapPair { u, r, overlap })
}
