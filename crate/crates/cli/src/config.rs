use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use codedopt::encoding::Scheme;
use codedopt::solver::{Algorithm, EpsilonChoice};
use codedopt::straggler::DelayKind;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Line { line: usize, message: String },
    #[error("missing required key `{0}`")]
    Missing(&'static str),
    #[error("{0}")]
    Invalid(String),
    #[error("cannot read {path}: {message}")]
    Read { path: String, message: String },
}

pub const KEYS: &[&str] = &[
    "n",
    "p",
    "problem_seed",
    "lambda",
    "scheme",
    "beta",
    "encoding_seed",
    "m",
    "k",
    "algorithm",
    "zeta",
    "memory",
    "nu",
    "max_iters",
    "delays",
    "delay_seed",
    "epsilon",
    "output",
    "compute_ms",
    "trials",
    "timeout_ms",
];

const REQUIRED: &[&str] = &["n", "p", "scheme", "m", "k"];

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub n: usize,
    pub p: usize,
    pub problem_seed: u64,
    pub lambda: f64,
    pub scheme: Scheme,
    pub beta: f64,
    pub encoding_seed: u64,
    pub m: usize,
    pub k: usize,
    pub algorithm: Algorithm,
    pub zeta: f64,
    pub memory: usize,
    pub nu: Option<f64>,
    pub max_iters: usize,
    pub delays: DelayKind,
    pub delay_seed: u64,
    pub epsilon: EpsilonChoice,
    pub output: Option<PathBuf>,
    pub compute_ms: f64,
    pub trials: usize,
    pub timeout_ms: u64,
}

struct Entries(HashMap<&'static str, (usize, String)>);

impl Entries {
    fn get<T: FromStr>(&self, key: &'static str) -> Result<Option<T>, ConfigError>
    where
        T::Err: std::fmt::Display,
    {
        match self.0.get(key) {
            None => Ok(None),
            Some((line, raw)) => raw.parse::<T>().map(Some).map_err(|e| ConfigError::Line {
                line: *line,
                message: format!("bad value for `{key}`: {e}"),
            }),
        }
    }

    fn required<T: FromStr>(&self, key: &'static str) -> Result<T, ConfigError>
    where
        T::Err: std::fmt::Display,
    {
        self.get(key)?.ok_or(ConfigError::Missing(key))
    }

    fn line(&self, key: &str) -> usize {
        self.0.get(key).map_or(0, |(l, _)| *l)
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Read {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        text.parse()
    }
}

impl FromStr for ExperimentConfig {
    type Err = ConfigError;

    fn from_str(text: &str) -> Result<Self, ConfigError> {
        let mut map = HashMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let err = |message: String| ConfigError::Line { line, message };
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| err(format!("expected key=value, got `{content}`")))?;
            let key = key.trim();
            let Some(&known) = KEYS.iter().find(|k| **k == key) else {
                return Err(err(format!("unknown key `{key}`")));
            };
            if map.insert(known, (line, value.trim().to_string())).is_some() {
                return Err(err(format!("duplicate key `{key}`")));
            }
        }
        let e = Entries(map);
        for key in REQUIRED {
            if !e.0.contains_key(key) {
                return Err(ConfigError::Missing(key));
            }
        }
        let scheme: Scheme = e.required("scheme")?;
        let default_beta = if scheme == Scheme::Identity { 1.0 } else { 2.0 };
        let nu = match e.get::<String>("nu")? {
            None => None,
            Some(s) if s == "auto" => None,
            Some(_) => e.get::<f64>("nu")?,
        };
        let cfg = ExperimentConfig {
            n: e.required("n")?,
            p: e.required("p")?,
            problem_seed: e.get("problem_seed")?.unwrap_or(1),
            lambda: e.get("lambda")?.unwrap_or(0.0),
            scheme,
            beta: e.get("beta")?.unwrap_or(default_beta),
            encoding_seed: e.get("encoding_seed")?.unwrap_or(1),
            m: e.required("m")?,
            k: e.required("k")?,
            algorithm: e.get("algorithm")?.unwrap_or(Algorithm::Lbfgs),
            zeta: e.get("zeta")?.unwrap_or(0.5),
            memory: e.get("memory")?.unwrap_or(10),
            nu,
            max_iters: e.get("max_iters")?.unwrap_or(100),
            delays: e.get("delays")?.unwrap_or(DelayKind::None),
            delay_seed: e.get("delay_seed")?.unwrap_or(1),
            epsilon: e.get("epsilon")?.unwrap_or(EpsilonChoice::Auto),
            output: e.get::<String>("output")?.filter(|s| !s.is_empty()).map(PathBuf::from),
            compute_ms: e.get("compute_ms")?.unwrap_or(0.0),
            trials: e.get("trials")?.unwrap_or(50),
            timeout_ms: e.get("timeout_ms")?.unwrap_or(30_000),
        };
        let at = |key: &str, message: String| ConfigError::Line {
            line: e.line(key),
            message,
        };
        if cfg.k == 0 || cfg.k > cfg.m {
            return Err(at("k", format!("k={} must satisfy 1 <= k <= m={}", cfg.k, cfg.m)));
        }
        if cfg.n == 0 || cfg.p == 0 {
            return Err(ConfigError::Invalid("n and p must be positive".into()));
        }
        if !(cfg.lambda >= 0.0) {
            return Err(at("lambda", "lambda must be nonnegative".into()));
        }
        if !(cfg.compute_ms >= 0.0) {
            return Err(at("compute_ms", "compute_ms must be nonnegative".into()));
        }
        Ok(cfg)
    }
}
