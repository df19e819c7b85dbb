use super::aggregate::{exact_line_search, gd_step, overlap_pair, Aggregator, Reply};
use super::lbfgs::{LbfgsMemory, PairOutcome};
use super::trace::{IterDiagnostics, RunTrace, TraceRecord};
use super::{Algorithm, Result, SolverConfig, SolverError};
use crate::encoding::EncodedPartition;
use crate::numerics::{dot, norm, sym_eig, DenseMatrix};
use crate::par;
use crate::problem::QuadraticProblem;
use crate::straggler::{overlap_size, DelayModel, RoundSubsets};

/// Replies of one race, sorted by node.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundReplies<T> {
    pub replies: Vec<Reply<T>>,
    pub elapsed_ms: f64,
}

impl<T> RoundReplies<T> {
    pub fn nodes(&self) -> Vec<usize> {
        self.replies.iter().map(|r| r.node).collect()
    }
}

/// Source of fastest-k worker replies, in-process or remote.
pub trait WorkerPool {
    fn nodes(&self) -> usize;

    /// Broadcasts `w` for iteration `t` and returns the first `k` gradients.
    fn gradient_round(&mut self, t: usize, w: &[f64], k: usize) -> Result<RoundReplies<Vec<f64>>>;

    /// Broadcasts `d` for iteration `t` and returns the first `k` values `‖X̃ᵢd‖²`.
    fn line_search_round(&mut self, t: usize, d: &[f64], k: usize) -> Result<RoundReplies<f64>>;
}

/// In-process workers whose arrival order comes from a delay model.
pub struct SimulatedPool<'a> {
    partitions: &'a [EncodedPartition],
    model: DelayModel,
    compute_ms: f64,
    cached: Option<(usize, usize, RoundSubsets)>,
}

impl<'a> SimulatedPool<'a> {
    pub fn new(partitions: &'a [EncodedPartition], model: DelayModel, compute_ms: f64) -> Self {
        Self {
            partitions,
            model,
            compute_ms,
            cached: None,
        }
    }

    fn subsets(&mut self, t: usize, k: usize) -> Result<RoundSubsets> {
        match &self.cached {
            Some((ct, ck, s)) if *ct == t && *ck == k => Ok(s.clone()),
            _ => {
                let s = self.model.round(t, self.partitions.len(), k)?;
                self.cached = Some((t, k, s.clone()));
                Ok(s)
            }
        }
    }
}

fn kth(delays: &[f64], nodes: &[usize]) -> f64 {
    nodes.iter().map(|&i| delays[i]).fold(0.0, f64::max)
}

impl WorkerPool for SimulatedPool<'_> {
    fn nodes(&self) -> usize {
        self.partitions.len()
    }

    fn gradient_round(&mut self, t: usize, w: &[f64], k: usize) -> Result<RoundReplies<Vec<f64>>> {
        let s = self.subsets(t, k)?;
        let parts = self.partitions;
        let grads = par::map_slice(&s.a, |&i| parts[i].gradient(w));
        Ok(RoundReplies {
            replies: s
                .a
                .iter()
                .zip(grads)
                .map(|(&i, g)| Reply::new(i, g, s.delays_a[i]))
                .collect(),
            elapsed_ms: kth(&s.delays_a, &s.a) + self.compute_ms,
        })
    }

    fn line_search_round(&mut self, t: usize, d: &[f64], k: usize) -> Result<RoundReplies<f64>> {
        let s = self.subsets(t, k)?;
        let parts = self.partitions;
        let vals = par::map_slice(&s.d, |&i| parts[i].curvature(d));
        Ok(RoundReplies {
            replies: s
                .d
                .iter()
                .zip(vals)
                .map(|(&i, v)| Reply::new(i, v, s.delays_d[i]))
                .collect(),
            elapsed_ms: kth(&s.delays_d, &s.d) + self.compute_ms,
        })
    }
}

/// What the master knows: the original problem (for reporting), its own
/// copy of the encoded partitions, and the aggregation rule.
pub struct RunContext<'a> {
    pub problem: &'a QuadraticProblem,
    pub partitions: &'a [EncodedPartition],
    pub aggregator: Aggregator,
    grams: Option<Vec<DenseMatrix>>,
}

impl<'a> RunContext<'a> {
    pub fn new(
        problem: &'a QuadraticProblem,
        partitions: &'a [EncodedPartition],
        aggregator: Aggregator,
    ) -> Self {
        Self {
            problem,
            partitions,
            aggregator,
            grams: None,
        }
    }

    fn ensure_grams(&mut self) {
        if self.grams.is_none() {
            self.grams = Some(par::map_slice(self.partitions, |p| p.x.gram()));
        }
    }

    /// `(m/(β|O|))·Σ_{i∈O} X̃ᵢᵀX̃ᵢ`.
    pub fn overlap_hessian(&mut self, overlap: &[usize]) -> DenseMatrix {
        self.ensure_grams();
        let grams = self.grams.as_ref().expect("computed above");
        let p = self.problem.p();
        let mut h = DenseMatrix::zeros(p, p);
        for &i in overlap {
            h = h.add(&grams[i]).expect("p x p");
        }
        h.scaled(self.aggregator.scale(overlap.len()))
    }

    /// `(1/β)·Σᵢ ½‖X̃ᵢw − ỹᵢ‖² + (λ/2)‖w‖²`.
    pub fn encoded_objective(&self, w: &[f64]) -> f64 {
        let sum: f64 = self.partitions.iter().map(|p| p.objective(w)).sum();
        sum / self.aggregator.beta + 0.5 * self.aggregator.lambda * dot(w, w)
    }

    fn record(&self, iter: usize, t_sim_ms: f64, w: Vec<f64>) -> Result<TraceRecord> {
        Ok(TraceRecord {
            iter,
            t_sim_ms,
            f: self.problem.objective(&w)?,
            f_encoded: self.encoded_objective(&w),
            grad_norm: norm(&self.problem.gradient(&w)?),
            alpha: None,
            overlap: None,
            bound: None,
            a: Vec::new(),
            d: Vec::new(),
            w,
            diagnostics: None,
        })
    }
}

fn check_pool(ctx: &RunContext<'_>, pool: &dyn WorkerPool, config: &SolverConfig) -> Result<()> {
    if pool.nodes() != ctx.aggregator.m {
        return Err(SolverError::BadConfig(format!(
            "pool has {} workers but aggregation expects {}",
            pool.nodes(),
            ctx.aggregator.m
        )));
    }
    config.validate(pool.nodes())
}

/// Coded gradient descent with the constant step `2ζ/(M(1+ε))`.
pub fn run_gd(ctx: &mut RunContext<'_>, pool: &mut dyn WorkerPool, config: &SolverConfig) -> Result<RunTrace> {
    check_pool(ctx, pool, config)?;
    let p = ctx.problem.p();
    let alpha = config.gd_alpha(ctx.problem.big_m() + ctx.problem.lambda());
    let mut w = vec![0.0; p];
    let mut trace = RunTrace {
        records: vec![ctx.record(0, 0.0, w.clone())?],
    };
    let mut clock = 0.0;
    let mut prev_nodes: Option<Vec<usize>> = None;
    for t in 0..config.max_iters {
        let round = pool.gradient_round(t, &w, config.k)?;
        let g = ctx.aggregator.gradient(&round.replies, &w)?;
        if g.iter().all(|&x| x == 0.0) {
            break;
        }
        w = gd_step(&w, &g, alpha);
        clock += round.elapsed_ms;
        let nodes = round.nodes();
        let mut rec = ctx.record(t + 1, clock, w.clone())?;
        rec.alpha = Some(alpha);
        rec.overlap = prev_nodes.as_ref().map(|prev| overlap_size(prev, &nodes));
        rec.a = nodes.clone();
        rec.d = nodes.clone();
        trace.records.push(rec);
        prev_nodes = Some(nodes);
    }
    Ok(trace)
}

type GradientReply = Reply<Vec<f64>>;

/// Coded L-BFGS: gradients from `A_t`, exact line search over `D_t`,
/// curvature pairs from `A_t ∩ A_{t−1}`.
pub fn run_lbfgs(ctx: &mut RunContext<'_>, pool: &mut dyn WorkerPool, config: &SolverConfig) -> Result<RunTrace> {
    check_pool(ctx, pool, config)?;
    let p = ctx.problem.p();
    let m = pool.nodes();
    let nu = config.nu();
    let mut memory = LbfgsMemory::new(config.memory, config.initial_scaling);
    let mut w = vec![0.0; p];
    let mut trace = RunTrace {
        records: vec![ctx.record(0, 0.0, w.clone())?],
    };
    let mut clock = 0.0;
    let mut prev: Option<(Vec<GradientReply>, Vec<f64>)> = None;
    for t in 0..config.max_iters {
        let round = pool.gradient_round(t, &w, config.k)?;
        let g = ctx.aggregator.gradient(&round.replies, &w)?;
        if g.iter().all(|&x| x == 0.0) {
            break;
        }
        let mut diag = IterDiagnostics::default();
        let mut overlap = None;
        if let Some((prev_replies, w_prev)) = &prev {
            match overlap_pair(prev_replies, &round.replies, m, ctx.aggregator.beta, &w, w_prev) {
                Ok(pair) => {
                    overlap = Some(pair.overlap.len());
                    diag.curvature = Some(dot(&pair.r, &pair.u));
                    if config.track_diagnostics {
                        let h = ctx.overlap_hessian(&pair.overlap);
                        let s = sym_eig(&h)?;
                        diag.overlap_min = Some(s.min());
                        diag.overlap_max = Some(s.max());
                    }
                    let block = ctx.partitions[0].rows() as f64;
                    let n_rows = block * m as f64 / ctx.aggregator.beta;
                    if pair.overlap.len() as f64 * block < n_rows - 1e-9 {
                        log::debug!("iteration {t}: overlap of {} nodes has fewer than n rows", pair.overlap.len());
                    }
                    diag.pair_stored = memory.push(pair.u, pair.r) == PairOutcome::Stored;
                    if !diag.pair_stored {
                        log::info!("iteration {t}: curvature pair discarded");
                    }
                }
                Err(SolverError::EmptyOverlap) => {
                    overlap = Some(0);
                    log::debug!("iteration {t}: empty overlap, memory unchanged");
                }
                Err(e) => return Err(e),
            }
        }
        let d = memory.direction(&g)?;
        let descent = dot(&d, &g);
        if !(descent < 0.0) {
            return Err(SolverError::NotDescent(descent));
        }
        diag.descent = descent;
        diag.pairs = memory.len();
        if config.track_diagnostics {
            let b = memory.materialize(p);
            let s = sym_eig(&b)?;
            diag.b_min = s.min();
            diag.b_max = s.max();
            diag.hessian_trace = s.values().iter().map(|l| 1.0 / l).sum();
            diag.hessian_initial_trace = p as f64 * memory.hessian_initial_scale().unwrap_or(1.0);
        }
        let ls = pool.line_search_round(t, &d, config.k)?;
        let curvature = ctx.aggregator.curvature(&ls.replies, &d)?;
        let alpha = exact_line_search(&d, &g, curvature, nu)?;
        let w_next: Vec<f64> = w.iter().zip(&d).map(|(wi, di)| wi + alpha * di).collect();
        clock += round.elapsed_ms + ls.elapsed_ms;

        let mut rec = ctx.record(t + 1, clock, w_next.clone())?;
        rec.alpha = Some(alpha);
        rec.overlap = overlap;
        rec.a = round.nodes();
        rec.d = ls.nodes();
        rec.diagnostics = Some(diag);
        trace.records.push(rec);
        prev = Some((round.replies, std::mem::replace(&mut w, w_next)));
    }
    Ok(trace)
}

pub fn run_solver(ctx: &mut RunContext<'_>, pool: &mut dyn WorkerPool, config: &SolverConfig) -> Result<RunTrace> {
    match config.algorithm {
        Algorithm::Gd => run_gd(ctx, pool, config),
        Algorithm::Lbfgs => run_lbfgs(ctx, pool, config),
    }
}
