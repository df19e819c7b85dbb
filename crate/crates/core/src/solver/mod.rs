//! Coded gradient descent and L-BFGS over fastest-k replies, plus the
//! convergence bounds and lemma checks used to audit runs.

mod aggregate;
mod bounds;
mod instance;
mod lbfgs;
mod run;
mod trace;

pub use aggregate::{
    aggregate_gradient, exact_line_search, gd_step, overlap_pair, Aggregator, OverlapPair, Reply,
};
pub use bounds::{
    gamma1, gamma2, kappa, linear_recursion_majorant, rotation_bound_check, theorem1_bound,
    theorem2_bound, BoundParams, RotationCheck,
};
pub use instance::{
    attach_bounds, lbfgs_constants, orthonormal_columns, solution_ball_check, BoundCheck,
    CodedInstance, EpsilonChoice, LbfgsConstants, SolutionBall,
};
pub use lbfgs::{materialize_hessian_estimate, InitialScaling, LbfgsMemory, PairOutcome};
pub use run::{run_gd, run_lbfgs, run_solver, RunContext, RoundReplies, SimulatedPool, WorkerPool};
pub use trace::{IterDiagnostics, RunTrace, TraceRecord, CSV_HEADER};

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::encoding::EncodingError;
use crate::numerics::NumericsError;
use crate::problem::ProblemError;
use crate::straggler::StragglerError;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("no replies to aggregate")]
    EmptyReplySet,
    #[error("consecutive rounds share no nodes")]
    EmptyOverlap,
    #[error("non-finite input")]
    NonFiniteInput,
    #[error("line-search curvature is zero along the search direction")]
    DegenerateDirection,
    #[error("search direction is not a descent direction (dᵀg = {0:e})")]
    NotDescent(f64),
    #[error("no linear-convergence guarantee (κγ = {rate})")]
    NoGuarantee { rate: f64 },
    #[error("subset Gram is rank deficient")]
    RankDeficientSubset,
    #[error("matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid solver configuration: {0}")]
    BadConfig(String),
    #[error("worker pool failure: {0}")]
    Pool(String),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Encoding(#[from] EncodingError),
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Straggler(#[from] StragglerError),
}

pub type Result<T> = std::result::Result<T, SolverError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    Gd,
    Lbfgs,
}

impl FromStr for Algorithm {
    type Err = SolverError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gd" => Ok(Algorithm::Gd),
            "lbfgs" => Ok(Algorithm::Lbfgs),
            other => Err(SolverError::BadConfig(format!("unknown algorithm `{other}`"))),
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Algorithm::Gd => "gd",
            Algorithm::Lbfgs => "lbfgs",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub algorithm: Algorithm,
    /// Updates waited for per round.
    pub k: usize,
    /// GD step fraction, `α = 2ζ/(M(1+ε))`.
    pub zeta: f64,
    /// ε used in the step size and the line-search back-off.
    pub epsilon: f64,
    /// Overrides `ν = (1−ε)/(1+ε)`.
    pub nu: Option<f64>,
    pub memory: usize,
    pub max_iters: usize,
    pub initial_scaling: InitialScaling,
    /// Materialize `B_t` and overlap Hessians every iteration.
    pub track_diagnostics: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::Gd,
            k: 1,
            zeta: 0.5,
            epsilon: 0.0,
            nu: None,
            memory: 10,
            max_iters: 100,
            initial_scaling: InitialScaling::Inverse,
            track_diagnostics: false,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self, m: usize) -> Result<()> {
        let bad = |msg: String| Err(SolverError::BadConfig(msg));
        if self.k == 0 || self.k > m {
            return bad(format!("k={} must satisfy 1 <= k <= m={m}", self.k));
        }
        if !(self.zeta > 0.0 && self.zeta <= 1.0) {
            return bad(format!("zeta={} must lie in (0, 1]", self.zeta));
        }
        if !(self.epsilon >= 0.0) || !self.epsilon.is_finite() {
            return bad(format!("epsilon={} must be finite and nonnegative", self.epsilon));
        }
        if let Some(nu) = self.nu {
            if !(nu > 0.0 && nu <= 1.0) {
                return bad(format!("nu={nu} must lie in (0, 1]"));
            }
        }
        if self.memory == 0 {
            return bad("memory must be at least 1".into());
        }
        Ok(())
    }

    pub fn eta(&self, m: usize) -> f64 {
        self.k as f64 / m as f64
    }

    /// `α = 2ζ/(M(1+ε))`.
    pub fn gd_alpha(&self, big_m: f64) -> f64 {
        2.0 * self.zeta / (big_m * (1.0 + self.epsilon))
    }

    /// The override, else `(1−ε)/(1+ε)`; falls back to 1 when `ε ≥ 1`.
    pub fn nu(&self) -> f64 {
        match self.nu {
            Some(nu) => nu,
            None if self.epsilon < 1.0 => (1.0 - self.epsilon) / (1.0 + self.epsilon),
            None => 1.0,
        }
    }
}


#[cfg(test)]
mod run_tests;
