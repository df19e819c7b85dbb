use std::collections::BTreeSet;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use codedopt::cluster::{run_distributed, worker_listen, DistributedOptions};
use codedopt::encoding::{build_scheme, save_encoding, GramNormalization, Scheme};
use codedopt::numerics::{derive_seed, gaussian_vector, norm};
use codedopt::problem::{gen_synthetic, load_problem, save_problem, QuadraticProblem};
use codedopt::solver::{lbfgs_constants, rotation_bound_check, RunTrace, SolverError};
use log::{info, warn};

use crate::config::ExperimentConfig;
use crate::error::CliError;
use crate::experiment::{Evaluation, Experiment};

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::Config(format!("cannot create {}: {e}", path.display())))
}

pub struct SpectrumArgs {
    pub scheme: Scheme,
    pub n: usize,
    pub beta: f64,
    pub seed: u64,
    pub m: usize,
    pub k: usize,
    pub trials: usize,
    pub trial_seed: u64,
    pub output: Option<PathBuf>,
}

/// Writes `trial,eig_index,eigenvalue` rows and a closing `summary,epsilon_hat,<ε̂>` row.
pub fn spectrum(args: &SpectrumArgs) -> Result<(), CliError> {
    if args.k == 0 || args.k > args.m {
        return Err(CliError::Usage(format!("k={} must satisfy 1 <= k <= m={}", args.k, args.m)));
    }
    let enc = build_scheme(args.scheme, args.n, args.beta, args.seed, args.m)?;
    let oracle = codedopt::encoding::SubsetGramOracle::new(&enc, args.m)?;
    let est = codedopt::encoding::estimate_epsilon_with(&oracle, args.k, args.trials, args.trial_seed)?;
    let mut out: Box<dyn Write> = match &args.output {
        Some(p) => Box::new(create(p)?),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    };
    writeln!(out, "trial,eig_index,eigenvalue")?;
    for (t, trial) in est.trials.iter().enumerate() {
        let spec = oracle.spectrum(&trial.subset, GramNormalization::PerEta)?;
        for (i, v) in spec.values().iter().enumerate() {
            writeln!(out, "{t},{i},{v}")?;
        }
    }
    writeln!(out, "summary,epsilon_hat,{}", est.epsilon_hat)?;
    out.flush()?;
    Ok(())
}

fn write_trace(trace: &RunTrace, output: Option<&Path>) -> Result<(), CliError> {
    match output {
        Some(p) => {
            let mut w = create(p)?;
            trace.write_csv(&mut w)?;
            w.flush()?;
        }
        None => trace.write_csv(io::stdout().lock())?,
    }
    Ok(())
}

fn report(eval: &Evaluation, to_stdout: bool) -> Result<(), CliError> {
    if to_stdout {
        println!("{eval}");
    } else {
        eprintln!("{eval}");
    }
    if eval.violated() {
        return Err(CliError::Guarantee(format!(
            "{} iterations exceed the convergence bound",
            eval.check.violations.len()
        )));
    }
    Ok(())
}

pub fn solve(config: &Path, output: Option<PathBuf>) -> Result<(), CliError> {
    let cfg = ExperimentConfig::load(config)?;
    let output = output.or_else(|| cfg.output.clone());
    let exp = Experiment::prepare(cfg)?;
    let mut trace = exp.simulate()?;
    let eval = exp.evaluate(&mut trace)?;
    write_trace(&trace, output.as_deref())?;
    report(&eval, output.is_some())
}

pub fn master(workers: &[String], config: &Path, output: Option<PathBuf>) -> Result<(), CliError> {
    let cfg = ExperimentConfig::load(config)?;
    if workers.len() != cfg.m {
        return Err(CliError::Usage(format!(
            "{} worker endpoints given for m={}",
            workers.len(),
            cfg.m
        )));
    }
    if cfg.delays.is_adversarial() {
        return Err(CliError::Config("adversarial delay models are simulation-only".into()));
    }
    let output = output.or_else(|| cfg.output.clone());
    let exp = Experiment::prepare(cfg)?;
    let delays = match &exp.cfg.delays {
        codedopt::straggler::DelayKind::None => None,
        other => Some(other.clone()),
    };
    let options = DistributedOptions {
        delays,
        delay_seed: exp.cfg.delay_seed,
        timeout_ms: exp.cfg.timeout_ms,
    };
    let mut trace = run_distributed(&exp.instance, &exp.solver_config(), workers, &options)?;
    let eval = exp.evaluate(&mut trace)?;
    write_trace(&trace, output.as_deref())?;
    report(&eval, output.is_some())
}

pub fn worker(listen: &str) -> Result<(), CliError> {
    worker_listen(listen)?;
    Ok(())
}

pub fn gendata(n: usize, p: usize, lambda: f64, seed: u64, out: &Path) -> Result<(), CliError> {
    let prob = gen_synthetic(n, p, lambda, seed)?;
    save_problem(&prob, out)?;
    info!("wrote {n}x{p} problem to {}", out.display());
    Ok(())
}

pub struct EncodeArgs {
    pub data: PathBuf,
    pub scheme: Scheme,
    pub beta: f64,
    pub seed: u64,
    pub m: usize,
    pub out: PathBuf,
}

fn suffixed(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

/// Writes the encoded problem under `out` and `S` to `<out>.S.cmx`.
pub fn encode(args: &EncodeArgs) -> Result<(), CliError> {
    let prob = load_problem(&args.data)?;
    let enc = build_scheme(args.scheme, prob.n(), args.beta, args.seed, args.m)?;
    let prob = if enc.n() > prob.n() { prob.padded(enc.n())? } else { prob };
    let x = enc.apply(prob.x())?;
    let y = enc.apply_vector(prob.y())?;
    let encoded = QuadraticProblem::new(x, y, prob.lambda(), prob.seed())?;
    save_problem(&encoded, &args.out)?;
    save_encoding(&enc, suffixed(&args.out, ".S.cmx"))?;
    info!(
        "encoded {} rows into {} with {} ({})",
        prob.n(),
        enc.rows(),
        enc.scheme(),
        if enc.has_fast_path() { "fast path" } else { "dense" }
    );
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Status {
    Pass,
    Fail,
    Skip,
}

struct Check {
    name: &'static str,
    status: Status,
    detail: String,
}

fn line(status: Status) -> &'static str {
    match status {
        Status::Pass => "PASS",
        Status::Fail => "FAIL",
        Status::Skip => "SKIP",
    }
}

pub fn verify(config: &Path) -> Result<(), CliError> {
    let cfg = ExperimentConfig::load(config)?;
    if cfg.lambda != 0.0 {
        return Err(CliError::Config("verify requires lambda=0".into()));
    }
    let exp = Experiment::prepare(cfg)?;
    let mut trace = exp.simulate()?;
    let eval = exp.evaluate(&mut trace)?;
    let inst = &exp.instance;
    let mut checks = Vec::new();

    checks.push(Check {
        name: "sample_path_bound",
        status: match (&eval.check.no_guarantee, eval.check.violations.len()) {
            (Some(_), _) => Status::Skip,
            (None, 0) => Status::Pass,
            (None, _) => Status::Fail,
        },
        detail: match &eval.check.no_guarantee {
            Some(reason) => format!("no guarantee: {reason}"),
            None => format!(
                "{} violations over {} iterations",
                eval.check.violations.len(),
                eval.iterations
            ),
        },
    });

    let subsets: BTreeSet<Vec<usize>> = trace
        .records
        .iter()
        .filter(|r| !r.a.is_empty())
        .map(|r| r.a.clone())
        .take(20)
        .collect();
    let (mut held, mut failed, mut singular, mut worst) = (0, 0, 0, 0.0f64);
    for a in &subsets {
        match inst.solution_ball(a) {
            Ok(b) => {
                worst = worst.max(b.ratio / (b.kappa_used() * b.kappa_used()));
                if b.holds {
                    held += 1;
                } else {
                    failed += 1;
                }
            }
            Err(SolverError::RankDeficientSubset) => singular += 1,
            Err(e) => return Err(e.into()),
        }
    }
    checks.push(Check {
        name: "solution_ball",
        status: if failed > 0 {
            Status::Fail
        } else if held == 0 {
            Status::Skip
        } else {
            Status::Pass
        },
        detail: format!(
            "{held} held, {failed} failed, {singular} rank deficient; max f(w_A)/(kappa^2 f*) = {worst:.6}"
        ),
    });

    let hessian = inst.problem.hessian();
    let p = inst.problem.p();
    let mut min_margin = f64::INFINITY;
    for i in 0..100 {
        let mut u = gaussian_vector(p, 1.0, derive_seed(exp.cfg.problem_seed, 1000 + i))?;
        let nu = norm(&u);
        u.iter_mut().for_each(|x| *x /= nu);
        let r = rotation_bound_check(&hessian, &u)?;
        min_margin = min_margin.min(r.ratio - r.bound);
    }
    checks.push(Check {
        name: "rotation_bound",
        status: if min_margin >= -1e-12 { Status::Pass } else { Status::Fail },
        detail: format!("min(u'Mu/|Mu| - bound) = {min_margin:.3e} over 100 directions"),
    });

    let mut constants = format!(
        "epsilon_hat={:.6} epsilon_bound={:.6} kappa_hat={:.6}",
        eval.epsilon_hat, eval.epsilon_bound, eval.kappa_hat
    );
    match lbfgs_constants(&trace) {
        Some(c) => {
            let lemma_ok = c.min_b >= 1e-10 && c.trace_violations.is_empty();
            checks.push(Check {
                name: "hessian_stability",
                status: if lemma_ok { Status::Pass } else { Status::Fail },
                detail: format!(
                    "min eig(B) = {:.3e}, max eig(B) = {:.3e}, {} trace violations",
                    c.min_b,
                    c.max_b,
                    c.trace_violations.len()
                ),
            });
            let overlaps: BTreeSet<Vec<usize>> = trace
                .records
                .windows(2)
                .map(|w| w[1].a.iter().copied().filter(|i| w[0].a.contains(i)).collect::<Vec<_>>())
                .filter(|o| !o.is_empty())
                .take(50)
                .collect();
            let mut deficient = 0;
            for o in &overlaps {
                if !inst.overlap_full_rank(o)? {
                    deficient += 1;
                }
            }
            let curvature_ok = !(c.min_curvature <= 0.0) && deficient == 0;
            checks.push(Check {
                name: "curvature_positivity",
                status: if curvature_ok { Status::Pass } else { Status::Fail },
                detail: format!(
                    "min r'u = {:.3e}, {} pairs rejected, {deficient} of {} overlap Grams rank deficient",
                    c.min_curvature,
                    c.pairs_rejected,
                    overlaps.len()
                ),
            });
            let delta = c.overlap_min / inst.problem.mu();
            constants.push_str(&format!(" delta_hat={delta:.6} c1={:.6} c2={:.6}", c.c1, c.c2));
        }
        None => {
            for name in ["hessian_stability", "curvature_positivity"] {
                checks.push(Check {
                    name,
                    status: Status::Skip,
                    detail: "gradient descent run".into(),
                });
            }
        }
    }

    println!("constants {constants}");
    for c in &checks {
        println!("{} {}: {}", line(c.status), c.name, c.detail);
    }
    println!("{eval}");
    let failures = checks.iter().filter(|c| c.status == Status::Fail).count();
    if failures > 0 {
        warn!("{failures} checks failed");
        return Err(CliError::Guarantee(format!("{failures} checks failed")));
    }
    Ok(())
}
