use super::*;
use crate::numerics::DenseMatrix;
use crate::encoding::{
    build_fwht_subsampled, build_identity, build_paley_etf, build_replication, encode_problem,
    EncodedPartition, FwhtOptions,
};
use crate::numerics::{dot, gaussian_vector, sym_eig};
use crate::problem::{gen_synthetic, QuadraticProblem};
use crate::straggler::DelayModel;

fn all_replies(parts: &[EncodedPartition], w: &[f64]) -> Vec<Reply<Vec<f64>>> {
    parts.iter().map(|p| Reply::new(p.node, p.gradient(w), 0.0)).collect()
}

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    diff / dot(b, b).sqrt().max(f64::MIN_POSITIVE)
}

/// Golden-section minimization of a unimodal function on `[lo, hi]`.
fn golden_section(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut a = hi - r * (hi - lo);
    let mut b = lo + r * (hi - lo);
    let (mut fa, mut fb) = (f(a), f(b));
    for _ in 0..200 {
        if fa < fb {
            hi = b;
            b = a;
            fb = fa;
            a = hi - r * (hi - lo);
            fa = f(a);
        } else {
            lo = a;
            a = b;
            fa = fb;
            b = lo + r * (hi - lo);
            fb = f(b);
        }
    }
    0.5 * (lo + hi)
}

#[test]
fn full_participation_recovers_exact_gradient() {
    let prob = gen_synthetic(37, 5, 0.3, 4).unwrap().padded(19 * 2).unwrap();
    let prob19 = gen_synthetic(19, 5, 0.3, 4).unwrap();
    for (enc, prob, m) in [
        (build_paley_etf(37).unwrap(), &prob19, 19),
        (build_fwht_subsampled(38, 2.0, 3, FwhtOptions::default()).unwrap(), &prob, 4),
        (build_identity(38), &prob, 2),
    ] {
        let parts = encode_problem(&enc, prob.x(), prob.y(), m).unwrap();
        let agg = Aggregator::new(m, enc.beta(), prob.lambda(), None);
        for seed in 0..5 {
            let w = gaussian_vector(5, 1.0, seed).unwrap();
            let g = agg.gradient(&all_replies(&parts, &w), &w).unwrap();
            assert!(rel_err(&g, &prob.gradient(&w).unwrap()) <= 1e-10);
        }
    }
}

#[test]
fn replication_cover_gives_exact_gradient() {
    let prob = gen_synthetic(24, 4, 0.0, 1).unwrap();
    let enc = build_replication(24, 2, 6).unwrap();
    let parts = encode_problem(&enc, prob.x(), prob.y(), 6).unwrap();
    let agg = Aggregator::new(6, 2.0, 0.0, Some(2));
    let w = gaussian_vector(4, 1.0, 2).unwrap();
    // Nodes 0, 4, 2 cover partitions 0, 1, 2 of m/β = 3.
    let replies: Vec<Reply<Vec<f64>>> = [0usize, 4, 2, 3]
        .iter()
        .enumerate()
        .map(|(rank, &i)| Reply::new(i, parts[i].gradient(&w), rank as f64))
        .collect();
    let g = agg.gradient(&replies, &w).unwrap();
    assert!(rel_err(&g, &prob.gradient(&w).unwrap()) <= 1e-12);
}

#[test]
fn identity_overlap_pair_is_hessian_action() {
    let prob = gen_synthetic(32, 6, 0.0, 7).unwrap();
    let parts = encode_problem(&build_identity(32), prob.x(), prob.y(), 4).unwrap();
    let w0 = gaussian_vector(6, 1.0, 1).unwrap();
    let w1 = gaussian_vector(6, 1.0, 2).unwrap();
    let pair = overlap_pair(&all_replies(&parts, &w0), &all_replies(&parts, &w1), 4, 1.0, &w1, &w0).unwrap();
    let hu = prob.x().gram().matvec(&pair.u).unwrap();
    assert!(rel_err(&pair.r, &hu) <= 1e-10);
}

#[test]
fn overlap_curvature_is_bounded_below() {
    let prob = gen_synthetic(64, 8, 0.0, 3).unwrap();
    let enc = build_fwht_subsampled(64, 2.0, 5, FwhtOptions::default()).unwrap();
    let inst = CodedInstance::new(prob, enc, 16).unwrap();
    let mut ctx = inst.context();
    let w0 = gaussian_vector(8, 1.0, 1).unwrap();
    let w1 = gaussian_vector(8, 1.0, 2).unwrap();
    let prev: Vec<_> = all_replies(&inst.partitions, &w0).into_iter().filter(|r| r.node < 13).collect();
    let cur: Vec<_> = all_replies(&inst.partitions, &w1).into_iter().filter(|r| r.node >= 2).collect();
    let pair = overlap_pair(&prev, &cur, 16, inst.encoding.beta(), &w1, &w0).unwrap();
    let h = ctx.overlap_hessian(&pair.overlap);
    let delta_mu = sym_eig(&h).unwrap().min();
    assert!(delta_mu > 0.0);
    assert!(dot(&pair.r, &pair.u) >= delta_mu * dot(&pair.u, &pair.u) * (1.0 - 1e-12));
}

#[test]
fn line_search_matches_one_dimensional_minimizer() {
    let prob = gen_synthetic(19, 4, 0.0, 11).unwrap();
    let enc = build_paley_etf(37).unwrap();
    let parts = encode_problem(&enc, prob.x(), prob.y(), 19).unwrap();
    let agg = Aggregator::new(19, 2.0, 0.0, None);
    for seed in 0..10u64 {
        let w = gaussian_vector(4, 1.0, seed).unwrap();
        let g = agg.gradient(&all_replies(&parts, &w), &w).unwrap();
        let d: Vec<f64> = gaussian_vector(4, 1.0, seed + 100)
            .unwrap()
            .iter()
            .zip(&g)
            .map(|(r, gi)| 0.3 * r - gi)
            .collect();
        if dot(&d, &g) >= 0.0 {
            continue;
        }
        let ls: Vec<Reply<f64>> = parts.iter().map(|p| Reply::new(p.node, p.curvature(&d), 0.0)).collect();
        let alpha = exact_line_search(&d, &g, agg.curvature(&ls, &d).unwrap(), 1.0).unwrap();
        let phi = |a: f64| {
            let x: Vec<f64> = w.iter().zip(&d).map(|(wi, di)| wi + a * di).collect();
            prob.objective(&x).unwrap()
        };
        let oracle = golden_section(phi, 0.0, 4.0 * alpha);
        assert!((alpha - oracle).abs() <= 1e-8 * alpha.max(1.0));
    }
}

#[test]
fn scalar_line_search_is_inverse_curvature() {
    let prob = QuadraticProblem::new(DenseMatrix::from_rows(&[vec![2.0]]).unwrap(), vec![4.0], 0.0, 0).unwrap();
    let parts = encode_problem(&build_identity(1), prob.x(), prob.y(), 1).unwrap();
    let agg = Aggregator::new(1, 1.0, 0.0, None);
    let w = [0.5];
    let g = agg.gradient(&all_replies(&parts, &w), &w).unwrap();
    let d = vec![-g[0]];
    let ls = vec![Reply::new(0, parts[0].curvature(&d), 0.0)];
    for nu in [1.0, 0.5] {
        let alpha = exact_line_search(&d, &g, agg.curvature(&ls, &d).unwrap(), nu).unwrap();
        assert!((alpha - nu / 4.0).abs() < 1e-15);
    }
}

fn identity_instance(n: usize, p: usize, m: usize) -> CodedInstance {
    let prob = gen_synthetic(n, p, 0.0, 21).unwrap();
    CodedInstance::new(prob, build_identity(n), m).unwrap()
}

#[test]
fn gd_full_participation_is_monotone() {
    let inst = identity_instance(64, 8, 4);
    let cfg = SolverConfig {
        algorithm: Algorithm::Gd,
        k: 4,
        zeta: 0.5,
        max_iters: 60,
        ..SolverConfig::default()
    };
    let trace = inst.simulate(&cfg, &DelayModel::parse("none", 0).unwrap(), 0.0).unwrap();
    assert_eq!(trace.len(), 61);
    assert!(trace.records[0].alpha.is_none());
    let inc = trace.increases(0, 1e-12);
    assert!(inc.is_empty(), "{inc:?} {:?}", trace.objectives());
}

#[test]
fn lbfgs_full_participation_converges() {
    let inst = identity_instance(512, 64, 8);
    let cfg = SolverConfig {
        algorithm: Algorithm::Lbfgs,
        k: 8,
        memory: 10,
        max_iters: 200,
        track_diagnostics: true,
        ..SolverConfig::default()
    };
    let trace = inst.simulate(&cfg, &DelayModel::parse("exp:10", 3).unwrap(), 1.0).unwrap();
    let f_star = inst.reference.f_star;
    let reached = trace.records.iter().position(|r| r.f <= f_star * (1.0 + 1e-8));
    assert!(reached.is_some_and(|t| t <= 200), "final {}", trace.last().unwrap().f / f_star);
    let consts = lbfgs_constants(&trace).unwrap();
    assert_eq!(consts.descent_violations, 0);
    assert!(consts.min_curvature > 0.0);
    assert!(consts.min_b > 0.0);
    assert!(consts.trace_violations.is_empty());
}

#[test]
fn simulation_is_deterministic() {
    let prob = gen_synthetic(64, 8, 0.0, 2).unwrap();
    let inst = CodedInstance::new(prob, build_fwht_subsampled(64, 2.0, 1, FwhtOptions::default()).unwrap(), 8).unwrap();
    let cfg = SolverConfig {
        algorithm: Algorithm::Lbfgs,
        k: 6,
        max_iters: 20,
        epsilon: 0.3,
        ..SolverConfig::default()
    };
    let model = DelayModel::parse("exp:10", 9).unwrap();
    let a = inst.simulate(&cfg, &model, 0.5).unwrap();
    let b = inst.simulate(&cfg, &model, 0.5).unwrap();
    assert_eq!(a, b);
    assert!(a.records[1..].iter().all(|r| r.a.len() == 6 && r.d.len() == 6));
}

#[test]
fn solution_ball_full_set_and_rank_deficiency() {
    let prob = gen_synthetic(64, 6, 0.0, 5).unwrap();
    let inst = CodedInstance::new(prob, build_fwht_subsampled(64, 2.0, 4, FwhtOptions::default()).unwrap(), 16).unwrap();
    let all: Vec<usize> = (0..16).collect();
    let ball = inst.solution_ball(&all).unwrap();
    assert!((ball.ratio - 1.0).abs() <= 1e-9);
    assert!((ball.kappa_hat - 1.0).abs() <= 1e-9);
    assert!(ball.holds);

    let prob = gen_synthetic(64, 6, 0.0, 5).unwrap();
    let inst = CodedInstance::new(prob, build_identity(64), 16).unwrap();
    assert!(matches!(inst.solution_ball(&[0]), Err(SolverError::RankDeficientSubset)));
}

#[test]
fn orthonormal_basis_drops_dependent_columns() {
    let a = DenseMatrix::from_rows(&[vec![1.0, 2.0, 0.0], vec![1.0, 2.0, 1.0], vec![0.0, 0.0, 1.0]]).unwrap();
    let q = orthonormal_columns(&a);
    assert_eq!(q.cols(), 2);
    let g = q.gram();
    assert!(g.max_abs_diff(&DenseMatrix::identity(2)) < 1e-12);
}
