use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};

use super::aggregate::Aggregator;
use super::bounds::{theorem1_bound, theorem2_bound, BoundParams};
use super::run::{run_solver, RunContext, SimulatedPool};
use super::trace::RunTrace;
use super::{Algorithm, Result, SolverConfig, SolverError};
use crate::encoding::{
    encode_problem, epsilon_of_spectrum, EncodedPartition, EncodingMatrix, GramNormalization,
    Scheme, SpectralEstimate, SubsetGramOracle,
};
use crate::numerics::{dot, sym_eig, DenseMatrix, Spectrum};
use crate::problem::{solve_reference, ProblemError, QuadraticProblem, ReferenceSolution};
use crate::straggler::DelayModel;

/// How ε is chosen for step sizes and bounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EpsilonChoice {
    Auto,
    Fixed(f64),
}

impl std::str::FromStr for EpsilonChoice {
    type Err = SolverError;

    fn from_str(s: &str) -> Result<Self> {
        if s == "auto" {
            return Ok(EpsilonChoice::Auto);
        }
        match s.parse::<f64>() {
            Ok(e) if e >= 0.0 && e.is_finite() => Ok(EpsilonChoice::Fixed(e)),
            _ => Err(SolverError::BadConfig(format!("epsilon must be `auto` or a nonnegative number, got `{s}`"))),
        }
    }
}

/// Orthonormal basis of the column span of `a` (modified Gram–Schmidt,
/// applied twice); numerically dependent columns are dropped.
pub fn orthonormal_columns(a: &DenseMatrix) -> DenseMatrix {
    let (n, c) = a.shape();
    let scale = a.max_abs().max(f64::MIN_POSITIVE);
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(c);
    for j in 0..c {
        let mut v = a.column(j);
        for _ in 0..2 {
            for q in &basis {
                let proj = dot(q, &v);
                v.iter_mut().zip(q).for_each(|(x, qi)| *x -= proj * qi);
            }
        }
        let nv = dot(&v, &v).sqrt();
        if nv > 1e-10 * scale * (n as f64).sqrt() {
            v.iter_mut().for_each(|x| *x /= nv);
            basis.push(v);
        }
    }
    let k = basis.len().max(1);
    DenseMatrix::from_fn(n, k, |i, j| basis.get(j).map_or(0.0, |q| q[i]))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolutionBall {
    pub f_subset: f64,
    pub f_star: f64,
    /// `λ_max/λ_min` of `S_AᵀS_A`; infinite when singular.
    pub kappa_hat: f64,
    /// Same ratio restricted to `span(X, y)`.
    pub kappa_restricted: f64,
    pub ratio: f64,
    pub holds: bool,
}

impl SolutionBall {
    /// The κ̂ used by the check: the full one when finite.
    pub fn kappa_used(&self) -> f64 {
        if self.kappa_hat.is_finite() {
            self.kappa_hat
        } else {
            self.kappa_restricted
        }
    }
}

/// Outcome of comparing a trace against a bound sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundCheck {
    pub params: Option<BoundParams>,
    /// Why no guarantee applies, when it does not.
    pub no_guarantee: Option<String>,
    pub violations: Vec<usize>,
    pub epsilon: f64,
}

impl BoundCheck {
    pub fn guaranteed(&self) -> bool {
        self.no_guarantee.is_none()
    }

    fn none(reason: String, epsilon: f64) -> Self {
        Self {
            params: None,
            no_guarantee: Some(reason),
            violations: Vec::new(),
            epsilon,
        }
    }
}

/// Writes bound values into a trace and lists iterations that exceed them.
pub fn attach_bounds(trace: &mut RunTrace, bound: impl Fn(usize) -> Option<f64>) -> Vec<usize> {
    let mut violations = Vec::new();
    for rec in &mut trace.records {
        rec.bound = bound(rec.iter);
        if let Some(b) = rec.bound {
            if rec.f > b * (1.0 + 1e-12) {
                violations.push(rec.iter);
            }
        }
    }
    violations
}

/// L-BFGS constants measured along a tracked run.
#[derive(Debug, Clone, PartialEq)]
pub struct LbfgsConstants {
    /// Worst per-iteration `λ_min(B_t)/λ_max(B_t)`; `c₂ = 1` after rescaling.
    pub c1: f64,
    pub c2: f64,
    pub min_b: f64,
    pub max_b: f64,
    /// Extremes of the overlap Hessian over the run (`δ̂μ`, `M̂(1+ε̂)`).
    pub overlap_min: f64,
    pub overlap_max: f64,
    pub min_curvature: f64,
    pub pairs_rejected: usize,
    pub descent_violations: usize,
    /// Iterations where `trace(B⁻¹) > trace(B⁰) + σ̃·M̂(1+ε̂)`.
    pub trace_violations: Vec<usize>,
}

/// Extracts [`LbfgsConstants`]; `None` when the trace carries no diagnostics.
pub fn lbfgs_constants(trace: &RunTrace) -> Option<LbfgsConstants> {
    let diags: Vec<_> = trace
        .records
        .iter()
        .filter_map(|r| r.diagnostics.as_ref().map(|d| (r.iter, d)))
        .collect();
    if diags.is_empty() {
        return None;
    }
    let mut c = LbfgsConstants {
        c1: 1.0,
        c2: 1.0,
        min_b: f64::INFINITY,
        max_b: 0.0,
        overlap_min: f64::INFINITY,
        overlap_max: 0.0,
        min_curvature: f64::INFINITY,
        pairs_rejected: 0,
        descent_violations: 0,
        trace_violations: Vec::new(),
    };
    for (_, d) in &diags {
        c.c1 = c.c1.min(d.b_min / d.b_max);
        c.min_b = c.min_b.min(d.b_min);
        c.max_b = c.max_b.max(d.b_max);
        if let Some(v) = d.overlap_min {
            c.overlap_min = c.overlap_min.min(v);
        }
        if let Some(v) = d.overlap_max {
            c.overlap_max = c.overlap_max.max(v);
        }
        if let Some(ru) = d.curvature {
            c.min_curvature = c.min_curvature.min(ru);
            if !d.pair_stored {
                c.pairs_rejected += 1;
            }
        }
        if !(d.descent < 0.0) {
            c.descent_violations += 1;
        }
    }
    let growth = if c.overlap_max > 0.0 { c.overlap_max } else { 0.0 };
    for (iter, d) in &diags {
        let limit = d.hessian_initial_trace + d.pairs as f64 * growth;
        if d.hessian_trace > limit * (1.0 + 1e-9) {
            c.trace_violations.push(*iter);
        }
    }
    Some(c)
}

/// A problem encoded and split across `m` workers, with cached spectral data.
pub struct CodedInstance {
    pub problem: QuadraticProblem,
    pub encoding: EncodingMatrix,
    pub partitions: Vec<EncodedPartition>,
    pub m: usize,
    pub reference: ReferenceSolution,
    oracle: OnceLock<SubsetGramOracle>,
    span_basis: OnceLock<DenseMatrix>,
    extremes: Mutex<HashMap<Vec<usize>, (f64, f64)>>,
}

impl CodedInstance {
    /// Pads `problem` with zero rows up to `encoding.n()` when needed.
    pub fn new(problem: QuadraticProblem, encoding: EncodingMatrix, m: usize) -> Result<Self> {
        let problem = if problem.n() < encoding.n() {
            problem.padded(encoding.n())?
        } else {
            problem
        };
        let partitions = encode_problem(&encoding, problem.x(), problem.y(), m)?;
        let reference = solve_reference(&problem)?;
        Ok(Self {
            problem,
            encoding,
            partitions,
            m,
            reference,
            oracle: OnceLock::new(),
            span_basis: OnceLock::new(),
            extremes: Mutex::new(HashMap::new()),
        })
    }

    pub fn aggregator(&self) -> Aggregator {
        let replication = match self.encoding.scheme() {
            Scheme::Replication => Some(self.encoding.beta().round() as usize),
            _ => None,
        };
        Aggregator::new(self.m, self.encoding.beta(), self.problem.lambda(), replication)
    }

    pub fn context(&self) -> RunContext<'_> {
        RunContext::new(&self.problem, &self.partitions, self.aggregator())
    }

    pub fn simulate(&self, config: &SolverConfig, delays: &DelayModel, compute_ms: f64) -> Result<RunTrace> {
        let mut pool = SimulatedPool::new(&self.partitions, delays.clone(), compute_ms);
        run_solver(&mut self.context(), &mut pool, config)
    }

    pub fn oracle(&self) -> Result<&SubsetGramOracle> {
        if let Some(o) = self.oracle.get() {
            return Ok(o);
        }
        let o = SubsetGramOracle::new(&self.encoding, self.m)?;
        Ok(self.oracle.get_or_init(|| o))
    }

    pub fn estimate_epsilon(&self, k: usize, trials: usize, seed: u64) -> Result<SpectralEstimate> {
        Ok(crate::encoding::estimate_epsilon_with(self.oracle()?, k, trials, seed)?)
    }

    /// Normalized extreme eigenvalues of `S_AᵀS_A/(βη)`, cached per subset.
    pub fn subset_extremes(&self, subset: &[usize]) -> Result<(f64, f64)> {
        let mut key = subset.to_vec();
        key.sort_unstable();
        key.dedup();
        if let Some(v) = self.extremes.lock().expect("cache lock").get(&key) {
            return Ok(*v);
        }
        let spec = self.oracle()?.spectrum(&key, GramNormalization::PerEta)?;
        let v = (spec.min(), spec.max());
        self.extremes.lock().expect("cache lock").insert(key, v);
        Ok(v)
    }

    /// `max(λ_max − 1, 1 − λ_min)` over the given subsets.
    pub fn measured_epsilon<'s>(&self, subsets: impl IntoIterator<Item = &'s [usize]>) -> Result<f64> {
        let mut eps = 0.0f64;
        for a in subsets {
            let (lo, hi) = self.subset_extremes(a)?;
            eps = eps.max(epsilon_of_spectrum(&Spectrum::from_unsorted(vec![lo, hi])));
        }
        Ok(eps)
    }

    /// ε over the gradient and line-search subsets a run actually used.
    pub fn run_epsilon(&self, trace: &RunTrace) -> Result<f64> {
        let subsets = trace
            .records
            .iter()
            .flat_map(|r| [r.a.as_slice(), r.d.as_slice()])
            .filter(|a| !a.is_empty());
        self.measured_epsilon(subsets)
    }

    /// Whether the overlap Gram `S̆ᵀS̆` is positive definite.
    pub fn overlap_full_rank(&self, overlap: &[usize]) -> Result<bool> {
        let g = self.oracle()?.gram(overlap)?;
        Ok(g.cholesky(1e-10 * g.max_abs().max(1.0)).is_some())
    }

    fn theorem_inputs(&self) -> std::result::Result<(f64, f64, f64), String> {
        if self.problem.lambda() != 0.0 {
            return Err("bounds are stated for lambda = 0".into());
        }
        if !(self.problem.mu() > 0.0) {
            return Err("X has a nontrivial null space (mu = 0)".into());
        }
        Ok((self.problem.mu(), self.problem.big_m(), self.reference.f_star))
    }

    /// Sample-path check of the GD bound. `step_epsilon` is the ε used in the
    /// step, `bound_epsilon` the ε certified for the subsets in play.
    pub fn check_theorem1(
        &self,
        trace: &mut RunTrace,
        zeta: f64,
        step_epsilon: f64,
        bound_epsilon: f64,
    ) -> BoundCheck {
        let (mu, big_m, f_star) = match self.theorem_inputs() {
            Ok(v) => v,
            Err(e) => return BoundCheck::none(e, bound_epsilon),
        };
        if bound_epsilon >= 1.0 {
            return BoundCheck::none(format!("epsilon = {bound_epsilon:.4} >= 1"), bound_epsilon);
        }
        // Express the step against the certified ε.
        let zeta_eff = zeta * (1.0 + bound_epsilon) / (1.0 + step_epsilon);
        if zeta_eff > 1.0 {
            return BoundCheck::none(
                format!("step exceeds 2/(M(1+eps)) for eps = {bound_epsilon:.4}"),
                bound_epsilon,
            );
        }
        let f0 = trace.records[0].f;
        let params = BoundParams::for_gd(mu, big_m, zeta_eff, bound_epsilon, f0, f_star);
        if let Err(SolverError::NoGuarantee { rate }) = theorem1_bound(&params, 0) {
            return BoundCheck {
                params: Some(params),
                ..BoundCheck::none(format!("kappa*gamma1 = {rate:.4} >= 1"), bound_epsilon)
            };
        }
        let violations = attach_bounds(trace, |t| theorem1_bound(&params, t).ok());
        BoundCheck {
            params: Some(params),
            no_guarantee: None,
            violations,
            epsilon: bound_epsilon,
        }
    }

    /// Sample-path check of the L-BFGS bound with `(c₁, c₂)` measured on the trace.
    pub fn check_theorem2(&self, trace: &mut RunTrace, step_epsilon: f64, bound_epsilon: f64) -> BoundCheck {
        let (mu, big_m, f_star) = match self.theorem_inputs() {
            Ok(v) => v,
            Err(e) => return BoundCheck::none(e, bound_epsilon),
        };
        if bound_epsilon >= 1.0 {
            return BoundCheck::none(format!("epsilon = {bound_epsilon:.4} >= 1"), bound_epsilon);
        }
        if bound_epsilon > step_epsilon {
            return BoundCheck::none(
                format!("back-off used eps = {step_epsilon:.4} below the certified {bound_epsilon:.4}"),
                bound_epsilon,
            );
        }
        let Some(consts) = lbfgs_constants(trace) else {
            return BoundCheck::none("run carries no L-BFGS diagnostics".into(), bound_epsilon);
        };
        let f0 = trace.records[0].f;
        let params = BoundParams::for_lbfgs(mu, big_m, bound_epsilon, consts.c1, consts.c2, f0, f_star);
        if let Err(SolverError::NoGuarantee { rate }) = theorem2_bound(&params, 0) {
            return BoundCheck {
                params: Some(params),
                ..BoundCheck::none(format!("kappa*gamma2 = {rate:.4} >= 1"), bound_epsilon)
            };
        }
        let violations = attach_bounds(trace, |t| theorem2_bound(&params, t).ok());
        BoundCheck {
            params: Some(params),
            no_guarantee: None,
            violations,
            epsilon: bound_epsilon,
        }
    }

    /// Certified ε for a run: the configured estimate, raised to what the
    /// run's own subsets show when that could matter.
    pub fn bound_epsilon(&self, choice: EpsilonChoice, estimate: f64, trace: &RunTrace) -> Result<f64> {
        match choice {
            EpsilonChoice::Fixed(e) => Ok(e),
            EpsilonChoice::Auto => Ok(estimate.max(self.run_epsilon(trace)?)),
        }
    }

    fn span_basis(&self) -> &DenseMatrix {
        self.span_basis.get_or_init(|| {
            let (x, y) = (self.problem.x(), self.problem.y());
            let p = x.cols();
            let xy = DenseMatrix::from_fn(x.rows(), p + 1, |i, j| if j < p { x.get(i, j) } else { y[i] });
            orthonormal_columns(&xy)
        })
    }

    /// Compares the subset optimum against `κ̂²·f(w*)`.
    pub fn solution_ball(&self, subset: &[usize]) -> Result<SolutionBall> {
        let oracle = self.oracle()?;
        let mut a = subset.to_vec();
        a.sort_unstable();
        a.dedup();
        let eta_beta = self.encoding.beta() * a.len() as f64 / self.m as f64;
        let scale = 1.0 / eta_beta.sqrt();
        let blocks: Vec<&DenseMatrix> = a.iter().map(|&i| &self.partitions[i].x).collect();
        let xa = DenseMatrix::vstack(&blocks)?.scaled(scale);
        let ya: Vec<f64> = a
            .iter()
            .flat_map(|&i| self.partitions[i].y.iter().map(|v| v * scale))
            .collect();
        let sub = QuadraticProblem::new(xa, ya, self.problem.lambda(), 0)?;
        let w_sub = match solve_reference(&sub) {
            Ok(s) => s.w_star,
            Err(ProblemError::SingularSystem(_)) => return Err(SolverError::RankDeficientSubset),
            Err(e) => return Err(e.into()),
        };
        let f_subset = self.problem.objective(&w_sub)?;

        let spec = oracle.spectrum(&a, GramNormalization::Raw)?;
        let kappa_hat = if spec.min() > 1e-12 * spec.max() {
            spec.max() / spec.min()
        } else {
            f64::INFINITY
        };
        let sa_q = oracle.subset_rows(&a)?.matmul(self.span_basis())?;
        let rs = sym_eig(&sa_q.gram())?;
        let kappa_restricted = if rs.min() > 1e-12 * rs.max() {
            rs.max() / rs.min()
        } else {
            f64::INFINITY
        };
        let f_star = self.reference.f_star;
        let ratio = f_subset / f_star;
        let mut out = SolutionBall {
            f_subset,
            f_star,
            kappa_hat,
            kappa_restricted,
            ratio,
            holds: false,
        };
        let k = out.kappa_used();
        out.holds = ratio <= k * k * (1.0 + 1e-6);
        Ok(out)
    }
}

/// Runs the solution-ball comparison for one subset.
pub fn solution_ball_check(instance: &CodedInstance, subset: &[usize]) -> Result<SolutionBall> {
    instance.solution_ball(subset)
}

impl SolverConfig {
    pub fn is_lbfgs(&self) -> bool {
        self.algorithm == Algorithm::Lbfgs
    }
}
