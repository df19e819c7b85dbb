use std::fmt;

use codedopt::encoding::{build_scheme, SpectralEstimate};
use codedopt::numerics::derive_seed;
use codedopt::problem::gen_synthetic;
use codedopt::solver::{
    kappa, Algorithm, BoundCheck, CodedInstance, EpsilonChoice, InitialScaling, RunTrace, SolverConfig,
};
use codedopt::straggler::DelayModel;
use log::info;

use crate::config::ExperimentConfig;
use crate::error::CliError;

/// A configured instance with its spectral estimate.
pub struct Experiment {
    pub cfg: ExperimentConfig,
    pub instance: CodedInstance,
    pub estimate: SpectralEstimate,
    /// ε used in step sizes.
    pub step_epsilon: f64,
}

/// How a finished run compares with its guarantee.
pub struct Evaluation {
    pub final_ratio: f64,
    pub epsilon_hat: f64,
    pub epsilon_bound: f64,
    pub kappa_hat: f64,
    pub iterations: usize,
    pub t_sim_ms: f64,
    pub check: BoundCheck,
}

impl Evaluation {
    pub fn violated(&self) -> bool {
        self.check.guaranteed() && !self.check.violations.is_empty()
    }
}

impl fmt::Display for Evaluation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "summary final_ratio={:.10} epsilon_hat={:.6} epsilon_bound={:.6} kappa_hat={:.6} iterations={} t_sim_ms={:.3} ",
            self.final_ratio, self.epsilon_hat, self.epsilon_bound, self.kappa_hat, self.iterations, self.t_sim_ms
        )?;
        match &self.check.no_guarantee {
            None => write!(f, "guarantee=active violations={}", self.check.violations.len()),
            Some(reason) => write!(f, "guarantee=none violations=0 reason=\"{reason}\""),
        }
    }
}

impl Experiment {
    pub fn prepare(cfg: ExperimentConfig) -> Result<Self, CliError> {
        let problem = gen_synthetic(cfg.n, cfg.p, cfg.lambda, cfg.problem_seed)?;
        let encoding = build_scheme(cfg.scheme, cfg.n, cfg.beta, cfg.encoding_seed, cfg.m)?;
        if encoding.n() != cfg.n {
            info!("{} frame covers n={}; padding data with zero rows", cfg.scheme, encoding.n());
        }
        let instance = CodedInstance::new(problem, encoding, cfg.m)?;
        let estimate = instance.estimate_epsilon(cfg.k, cfg.trials, derive_seed(cfg.encoding_seed, 1))?;
        let step_epsilon = match cfg.epsilon {
            EpsilonChoice::Auto => estimate.epsilon_hat,
            EpsilonChoice::Fixed(e) => e,
        };
        info!("epsilon_hat={:.6} step epsilon={:.6}", estimate.epsilon_hat, step_epsilon);
        Ok(Self {
            cfg,
            instance,
            estimate,
            step_epsilon,
        })
    }

    pub fn solver_config(&self) -> SolverConfig {
        let cfg = &self.cfg;
        SolverConfig {
            algorithm: cfg.algorithm,
            k: cfg.k,
            zeta: cfg.zeta,
            epsilon: self.step_epsilon,
            nu: cfg.nu,
            memory: cfg.memory,
            max_iters: cfg.max_iters,
            initial_scaling: InitialScaling::Inverse,
            track_diagnostics: cfg.algorithm == Algorithm::Lbfgs && cfg.lambda == 0.0,
        }
    }

    pub fn delay_model(&self) -> DelayModel {
        DelayModel::new(self.cfg.delays.clone(), self.cfg.delay_seed)
    }

    pub fn simulate(&self) -> Result<RunTrace, CliError> {
        Ok(self
            .instance
            .simulate(&self.solver_config(), &self.delay_model(), self.cfg.compute_ms)?)
    }

    /// Attaches bound values to `trace` and summarizes it.
    pub fn evaluate(&self, trace: &mut RunTrace) -> Result<Evaluation, CliError> {
        let epsilon_bound = self
            .instance
            .bound_epsilon(self.cfg.epsilon, self.estimate.epsilon_hat, trace)?;
        let check = match self.cfg.algorithm {
            Algorithm::Gd => self
                .instance
                .check_theorem1(trace, self.cfg.zeta, self.step_epsilon, epsilon_bound),
            Algorithm::Lbfgs => self.instance.check_theorem2(trace, self.step_epsilon, epsilon_bound),
        };
        let last = trace.last().expect("traces start with the initial point");
        Ok(Evaluation {
            final_ratio: last.f / self.instance.reference.f_star,
            epsilon_hat: self.estimate.epsilon_hat,
            epsilon_bound,
            kappa_hat: if epsilon_bound < 1.0 { kappa(epsilon_bound) } else { f64::INFINITY },
            iterations: last.iter,
            t_sim_ms: last.t_sim_ms,
            check,
        })
    }
}
