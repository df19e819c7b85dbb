//! Delay models and the per-round fastest-k subsets they induce.

use std::fmt;
use std::str::FromStr;

use rand_distr::{Distribution, Exp};
use thiserror::Error;

use crate::numerics::{derive_seed, seeded_rng};

#[derive(Debug, Error, PartialEq)]
pub enum StragglerError {
    #[error("k={k} must satisfy 1 <= k <= m={m}")]
    BadK { k: usize, m: usize },
    #[error("invalid delay spec `{0}`")]
    Parse(String),
    #[error("mean delay must be positive and finite, got {0}")]
    BadMean(f64),
    #[error("replication factor {beta} does not divide m={m}")]
    BadReplication { beta: usize, m: usize },
}

pub type Result<T> = std::result::Result<T, StragglerError>;

/// Synthetic lag given to nodes outside an adversarial subset.
pub const ADVERSARIAL_LAG_MS: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdversaryKind {
    FixedPrefix,
    FixedSuffix,
    RoundRobin,
    /// Alternates `{0..k}` and `{m−k..m}`.
    MinOverlap,
    /// Replication adversary: the fastest nodes are both copies of a sliding
    /// window of partitions, so every other partition has all copies delayed.
    BothCopies { beta: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub enum DelayKind {
    None,
    Exponential { mean_ms: f64 },
    ShiftedExponential { shift_ms: f64, mean_ms: f64 },
    /// Per-node delays, reused cyclically when shorter than `m`.
    Deterministic(Vec<f64>),
    Adversarial(AdversaryKind),
}

impl DelayKind {
    pub fn is_adversarial(&self) -> bool {
        matches!(self, DelayKind::Adversarial(_))
    }

    pub fn is_random(&self) -> bool {
        matches!(self, DelayKind::Exponential { .. } | DelayKind::ShiftedExponential { .. })
    }
}

fn parse_ms(s: &str, spec: &str) -> Result<f64> {
    let v: f64 = s
        .trim()
        .parse()
        .map_err(|_| StragglerError::Parse(spec.to_string()))?;
    if !v.is_finite() || v < 0.0 {
        return Err(StragglerError::Parse(spec.to_string()));
    }
    Ok(v)
}

impl FromStr for DelayKind {
    type Err = StragglerError;

    fn from_str(spec: &str) -> Result<Self> {
        let spec = spec.trim();
        let bad = || StragglerError::Parse(spec.to_string());
        let (head, rest) = spec.split_once(':').unwrap_or((spec, ""));
        match head {
            "none" if rest.is_empty() => Ok(DelayKind::None),
            "exp" => {
                let mean_ms = parse_ms(rest, spec)?;
                if mean_ms <= 0.0 {
                    return Err(StragglerError::BadMean(mean_ms));
                }
                Ok(DelayKind::Exponential { mean_ms })
            }
            "sexp" => {
                let (shift, mean) = rest.split_once('+').ok_or_else(bad)?;
                let mean_ms = parse_ms(mean, spec)?;
                if mean_ms <= 0.0 {
                    return Err(StragglerError::BadMean(mean_ms));
                }
                Ok(DelayKind::ShiftedExponential {
                    shift_ms: parse_ms(shift, spec)?,
                    mean_ms,
                })
            }
            "det" => {
                let list = rest
                    .split(',')
                    .map(|v| parse_ms(v, spec))
                    .collect::<Result<Vec<f64>>>()?;
                Ok(DelayKind::Deterministic(list))
            }
            "adv" => {
                let (name, arg) = rest.split_once(':').unwrap_or((rest, ""));
                let kind = match (name, arg) {
                    ("fixed_prefix", "") => AdversaryKind::FixedPrefix,
                    ("fixed_suffix", "") => AdversaryKind::FixedSuffix,
                    ("round_robin", "") => AdversaryKind::RoundRobin,
                    ("min_overlap", "") => AdversaryKind::MinOverlap,
                    ("both_copies", "") => AdversaryKind::BothCopies { beta: 2 },
                    ("both_copies", b) => AdversaryKind::BothCopies {
                        beta: b.parse().ok().filter(|&b| b >= 1).ok_or_else(bad)?,
                    },
                    _ => return Err(bad()),
                };
                Ok(DelayKind::Adversarial(kind))
            }
            _ => Err(bad()),
        }
    }
}

impl fmt::Display for DelayKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DelayKind::None => f.write_str("none"),
            DelayKind::Exponential { mean_ms } => write!(f, "exp:{mean_ms}"),
            DelayKind::ShiftedExponential { shift_ms, mean_ms } => {
                write!(f, "sexp:{shift_ms}+{mean_ms}")
            }
            DelayKind::Deterministic(list) => {
                let parts: Vec<String> = list.iter().map(|v| v.to_string()).collect();
                write!(f, "det:{}", parts.join(","))
            }
            DelayKind::Adversarial(kind) => match kind {
                AdversaryKind::FixedPrefix => f.write_str("adv:fixed_prefix"),
                AdversaryKind::FixedSuffix => f.write_str("adv:fixed_suffix"),
                AdversaryKind::RoundRobin => f.write_str("adv:round_robin"),
                AdversaryKind::MinOverlap => f.write_str("adv:min_overlap"),
                AdversaryKind::BothCopies { beta } => write!(f, "adv:both_copies:{beta}"),
            },
        }
    }
}

/// A delay kind together with its seed.
#[derive(Debug, Clone, PartialEq)]
pub struct DelayModel {
    pub kind: DelayKind,
    pub seed: u64,
}

impl DelayModel {
    pub fn new(kind: DelayKind, seed: u64) -> Self {
        Self { kind, seed }
    }

    pub fn parse(spec: &str, seed: u64) -> Result<Self> {
        Ok(Self::new(spec.parse()?, seed))
    }

    /// Subsets for iteration `t`: `A_t` races in protocol round `2t`,
    /// `D_t` in round `2t + 1`.
    pub fn round(&self, t: usize, m: usize, k: usize) -> Result<RoundSubsets> {
        check_k(m, k)?;
        if let DelayKind::Adversarial(kind) = &self.kind {
            return adversarial_subsets(*kind, m, k, t);
        }
        let delays_a = sample_delays(&self.kind, m, 2 * t as u64, self.seed);
        let delays_d = sample_delays(&self.kind, m, 2 * t as u64 + 1, self.seed);
        Ok(RoundSubsets {
            a: fastest_k(&delays_a, k)?,
            d: fastest_k(&delays_d, k)?,
            delays_a,
            delays_d,
        })
    }
}

fn check_k(m: usize, k: usize) -> Result<()> {
    if k == 0 || k > m {
        return Err(StragglerError::BadK { k, m });
    }
    Ok(())
}

/// Per-node delays in milliseconds for one protocol round.
pub fn sample_delays(kind: &DelayKind, m: usize, round: u64, seed: u64) -> Vec<f64> {
    match kind {
        DelayKind::None | DelayKind::Adversarial(_) => vec![0.0; m],
        DelayKind::Deterministic(list) if list.is_empty() => vec![0.0; m],
        DelayKind::Deterministic(list) => (0..m).map(|i| list[i % list.len()]).collect(),
        DelayKind::Exponential { mean_ms } => exp_draws(*mean_ms, 0.0, m, round, seed),
        DelayKind::ShiftedExponential { shift_ms, mean_ms } => {
            exp_draws(*mean_ms, *shift_ms, m, round, seed)
        }
    }
}

fn exp_draws(mean: f64, shift: f64, m: usize, round: u64, seed: u64) -> Vec<f64> {
    let dist = Exp::new(1.0 / mean).expect("mean validated at parse time");
    let mut rng = seeded_rng(derive_seed(seed, round));
    (0..m).map(|_| shift + dist.sample(&mut rng)).collect()
}

/// Indices of the `k` smallest delays, ties to the lower index, sorted.
pub fn fastest_k(delays: &[f64], k: usize) -> Result<Vec<usize>> {
    check_k(delays.len(), k)?;
    let mut order = arrival_order(delays);
    order.truncate(k);
    order.sort_unstable();
    Ok(order)
}

/// Node indices in arrival order.
pub fn arrival_order(delays: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..delays.len()).collect();
    order.sort_by(|&a, &b| delays[a].total_cmp(&delays[b]).then(a.cmp(&b)));
    order
}

/// `k`-th smallest delay.
pub fn kth_delay(delays: &[f64], k: usize) -> f64 {
    let order = arrival_order(delays);
    delays[order[k.clamp(1, delays.len()) - 1]]
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundSubsets {
    pub a: Vec<usize>,
    pub d: Vec<usize>,
    pub delays_a: Vec<f64>,
    pub delays_d: Vec<f64>,
}

impl RoundSubsets {
    /// Simulated duration: each of the two races lasts until its `k`-th
    /// reply, plus a fixed compute cost.
    pub fn elapsed_ms(&self, compute_ms: f64, with_line_search: bool) -> f64 {
        let k = self.a.len();
        let mut t = kth_delay(&self.delays_a, k) + compute_ms;
        if with_line_search {
            t += kth_delay(&self.delays_d, k) + compute_ms;
        }
        t
    }
}

fn adversarial_set(kind: AdversaryKind, m: usize, k: usize, t: usize) -> Result<Vec<usize>> {
    let mut set: Vec<usize> = match kind {
        AdversaryKind::FixedPrefix => (0..k).collect(),
        AdversaryKind::FixedSuffix => (m - k..m).collect(),
        AdversaryKind::RoundRobin => (0..k).map(|i| (t + i) % m).collect(),
        AdversaryKind::MinOverlap => {
            if t.is_multiple_of(2) {
                (0..k).collect()
            } else {
                (m - k..m).collect()
            }
        }
        AdversaryKind::BothCopies { beta } => {
            if beta == 0 || !m.is_multiple_of(beta) {
                return Err(StragglerError::BadReplication { beta, m });
            }
            let parts = m / beta;
            // Partition-major order starting at a rotating offset; node
            // `q + c·parts` is copy `c` of partition `q`.
            (0..m)
                .map(|j| {
                    let q = (t + j / beta) % parts;
                    q + (j % beta) * parts
                })
                .take(k)
                .collect()
        }
    };
    set.sort_unstable();
    Ok(set)
}

/// Deterministic worst-case subsets; `D_t = A_t` and members arrive first.
pub fn adversarial_subsets(kind: AdversaryKind, m: usize, k: usize, t: usize) -> Result<RoundSubsets> {
    check_k(m, k)?;
    let a = adversarial_set(kind, m, k, t)?;
    let mut delays = vec![ADVERSARIAL_LAG_MS; m];
    for &i in &a {
        delays[i] = 0.0;
    }
    Ok(RoundSubsets {
        d: a.clone(),
        a,
        delays_a: delays.clone(),
        delays_d: delays,
    })
}

/// Size of the intersection of two sorted index sets.
pub fn overlap_size(a: &[usize], b: &[usize]) -> usize {
    a.iter().filter(|i| b.binary_search(i).is_ok()).count()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dedupe {
    /// One node per represented partition, ordered by partition.
    pub kept: Vec<usize>,
    pub missing: Vec<usize>,
}

/// Keeps the earliest copy of each replicated partition. `replies` holds
/// `(node, arrival_ms)`; node `i` stores partition `i mod (m/β)`.
pub fn replication_dedupe(replies: &[(usize, f64)], m: usize, beta: usize) -> Result<Dedupe> {
    if beta == 0 || !m.is_multiple_of(beta) {
        return Err(StragglerError::BadReplication { beta, m });
    }
    let parts = m / beta;
    let mut best: Vec<Option<(usize, f64)>> = vec![None; parts];
    for &(node, at) in replies {
        let q = node % parts;
        let better = match best[q] {
            None => true,
            Some((n0, t0)) => at < t0 || (at == t0 && node < n0),
        };
        if better {
            best[q] = Some((node, at));
        }
    }
    Ok(Dedupe {
        kept: best.iter().flatten().map(|&(n, _)| n).collect(),
        missing: (0..parts).filter(|&q| best[q].is_none()).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn fastest_k_examples() {
        assert_eq!(fastest_k(&[5.0, 1.0, 3.0, 2.0], 2).unwrap(), vec![1, 3]);
        assert_eq!(fastest_k(&[1.0; 4], 2).unwrap(), vec![0, 1]);
        assert_eq!(fastest_k(&[3.0, 1.0, 2.0], 3).unwrap(), vec![0, 1, 2]);
        assert!(fastest_k(&[1.0], 2).is_err());
        assert!(fastest_k(&[1.0], 0).is_err());
    }

    #[test]
    fn delay_sampling() {
        let det = DelayKind::Deterministic(vec![5.0, 1.0, 3.0, 2.0]);
        assert_eq!(sample_delays(&det, 4, 7, 0), vec![5.0, 1.0, 3.0, 2.0]);

        let exp = DelayKind::Exponential { mean_ms: 10.0 };
        let draws = sample_delays(&exp, 10_000, 3, 42);
        let mean = draws.iter().sum::<f64>() / draws.len() as f64;
        assert!((9.0..=11.0).contains(&mean), "mean {mean}");
        assert!(draws.iter().all(|&d| d >= 0.0));
        assert_eq!(draws, sample_delays(&exp, 10_000, 3, 42));
        assert_ne!(draws, sample_delays(&exp, 10_000, 4, 42));

        let sexp = DelayKind::ShiftedExponential { shift_ms: 2.0, mean_ms: 8.0 };
        assert!(sample_delays(&sexp, 100, 0, 1).iter().all(|&d| d >= 2.0));
    }

    #[test]
    fn spec_strings_round_trip() {
        for s in [
            "none",
            "exp:10",
            "sexp:2+8",
            "det:5,1,3,2",
            "adv:fixed_prefix",
            "adv:fixed_suffix",
            "adv:round_robin",
            "adv:min_overlap",
            "adv:both_copies:3",
        ] {
            let k: DelayKind = s.parse().unwrap();
            assert_eq!(k.to_string(), s);
        }
        assert_eq!(
            "adv:both_copies".parse::<DelayKind>().unwrap(),
            DelayKind::Adversarial(AdversaryKind::BothCopies { beta: 2 })
        );
        for bad in ["exp", "exp:-1", "exp:0", "sexp:2", "det:", "adv:worst", "gamma:3", "none:1"] {
            assert!(bad.parse::<DelayKind>().is_err(), "{bad}");
        }
    }

    #[test]
    fn adversary_examples() {
        let a = |kind, m, k, t| adversarial_subsets(kind, m, k, t).unwrap().a;
        assert_eq!(a(AdversaryKind::FixedPrefix, 8, 6, 3), vec![0, 1, 2, 3, 4, 5]);
        assert_eq!(a(AdversaryKind::FixedSuffix, 8, 6, 3), vec![2, 3, 4, 5, 6, 7]);
        assert_eq!(a(AdversaryKind::RoundRobin, 4, 2, 0), vec![0, 1]);
        assert_eq!(a(AdversaryKind::RoundRobin, 4, 2, 1), vec![1, 2]);
        assert_eq!(a(AdversaryKind::RoundRobin, 4, 2, 2), vec![2, 3]);
        let p = a(AdversaryKind::MinOverlap, 8, 6, 4);
        let q = a(AdversaryKind::MinOverlap, 8, 6, 5);
        assert_eq!(overlap_size(&p, &q), 4);

        // Both copies of partitions {t, t+1, t+2} with m = 8, β = 2.
        let s = adversarial_subsets(AdversaryKind::BothCopies { beta: 2 }, 8, 6, 1).unwrap();
        assert_eq!(s.a, vec![1, 2, 3, 5, 6, 7]);
        assert_eq!(s.a, s.d);
        let d = replication_dedupe(&s.a.iter().map(|&i| (i, 0.0)).collect::<Vec<_>>(), 8, 2).unwrap();
        assert_eq!(d.missing, vec![0]);
    }

    #[test]
    fn dedupe_rules() {
        // m = 4, β = 2: nodes 0 and 2 hold partition 0.
        let d = replication_dedupe(&[(2, 1.0), (0, 3.0), (1, 2.0)], 4, 2).unwrap();
        assert_eq!(d.kept, vec![2, 1]);
        assert!(d.missing.is_empty());
        let d = replication_dedupe(&[(2, 1.0), (0, 1.0)], 4, 2).unwrap();
        assert_eq!(d.kept, vec![0]);
        assert_eq!(d.missing, vec![1]);
        let all: Vec<(usize, f64)> = (0..6).map(|i| (i, i as f64)).collect();
        let d = replication_dedupe(&all, 6, 3).unwrap();
        assert_eq!(d.kept, vec![0, 1]);
        assert!(replication_dedupe(&all, 6, 4).is_err());
    }

    #[test]
    fn round_uses_independent_races() {
        let model = DelayModel::parse("exp:10", 5).unwrap();
        let r = model.round(3, 16, 8).unwrap();
        assert_eq!(r.a.len(), 8);
        assert_eq!(r.d.len(), 8);
        assert_ne!(r.delays_a, r.delays_d);
        assert_eq!(r, model.round(3, 16, 8).unwrap());
        let det = DelayModel::parse("det:5,1,3,2", 0).unwrap().round(0, 4, 2).unwrap();
        assert_eq!(det.elapsed_ms(1.0, true), 2.0 + 1.0 + 2.0 + 1.0);
    }

    fn kind_strategy() -> impl Strategy<Value = DelayKind> {
        prop_oneof![
            Just(DelayKind::None),
            (1.0f64..50.0).prop_map(|mean_ms| DelayKind::Exponential { mean_ms }),
            Just(DelayKind::Adversarial(AdversaryKind::FixedPrefix)),
            Just(DelayKind::Adversarial(AdversaryKind::FixedSuffix)),
            Just(DelayKind::Adversarial(AdversaryKind::RoundRobin)),
            Just(DelayKind::Adversarial(AdversaryKind::MinOverlap)),
            Just(DelayKind::Adversarial(AdversaryKind::BothCopies { beta: 2 })),
        ]
    }

    proptest! {
        #[test]
        fn overlap_law_and_screen(kind in kind_strategy(), half_m in 1usize..12, k_raw in 1usize..24,
                                  seed in any::<u64>(), t in 1usize..50) {
            let m = 2 * half_m;
            let k = k_raw.min(m);
            let model = DelayModel::new(kind, seed);
            let prev = model.round(t - 1, m, k).unwrap();
            let cur = model.round(t, m, k).unwrap();
            prop_assert_eq!(cur.a.len(), k);
            prop_assert_eq!(cur.d.len(), k);
            prop_assert!(cur.a.iter().all(|&i| i < m));
            let o = overlap_size(&prev.a, &cur.a);
            prop_assert!(o as isize >= 2 * k as isize - m as isize);
            // With β = 2 and η ≥ 3/4 the overlap holds at least m/β nodes,
            // i.e. at least n encoded rows.
            if 4 * k >= 3 * m {
                prop_assert!(2 * o >= m);
            }
            prop_assert_eq!(&cur, &model.round(t, m, k).unwrap());
        }
    }
}
