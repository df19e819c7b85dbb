use std::io::{self, BufRead, Write};

/// Per-iteration L-BFGS diagnostics, filled when tracking is enabled.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct IterDiagnostics {
    /// Extreme eigenvalues of the inverse-Hessian estimate used for `d_t`.
    pub b_min: f64,
    pub b_max: f64,
    /// `trace(B⁻¹)` and `p·rᵀr/rᵀu` of the newest pair.
    pub hessian_trace: f64,
    pub hessian_initial_trace: f64,
    pub pairs: usize,
    /// Extreme eigenvalues of the overlap Hessian, when a pair was formed.
    pub overlap_min: Option<f64>,
    pub overlap_max: Option<f64>,
    /// `rᵀu` of the pair formed this iteration.
    pub curvature: Option<f64>,
    pub pair_stored: bool,
    /// `dᵀg̃`.
    pub descent: f64,
}

/// State after iteration `iter` together with the step that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub iter: usize,
    pub t_sim_ms: f64,
    pub f: f64,
    pub f_encoded: f64,
    pub grad_norm: f64,
    pub alpha: Option<f64>,
    pub overlap: Option<usize>,
    pub bound: Option<f64>,
    pub a: Vec<usize>,
    pub d: Vec<usize>,
    pub w: Vec<f64>,
    pub diagnostics: Option<IterDiagnostics>,
}

pub const CSV_HEADER: &str = "iter,t_sim_ms,f,f_encoded,grad_norm,alpha,overlap,bound";

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunTrace {
    pub records: Vec<TraceRecord>,
}

fn opt<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map(|x| x.to_string()).unwrap_or_default()
}

impl RunTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn last(&self) -> Option<&TraceRecord> {
        self.records.last()
    }

    pub fn objectives(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.f).collect()
    }

    pub fn total_time_ms(&self) -> f64 {
        self.last().map_or(0.0, |r| r.t_sim_ms)
    }

    /// Iterations `t` with `f_{t+1} > f_t·(1 + rel_tol)`, after `burn_in` records.
    pub fn increases(&self, burn_in: usize, rel_tol: f64) -> Vec<usize> {
        self.records
            .windows(2)
            .skip(burn_in)
            .filter(|w| w[1].f > w[0].f * (1.0 + rel_tol))
            .map(|w| w[0].iter)
            .collect()
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "{CSV_HEADER}")?;
        for r in &self.records {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                r.iter,
                r.t_sim_ms,
                r.f,
                r.f_encoded,
                r.grad_norm,
                opt(&r.alpha),
                opt(&r.overlap),
                opt(&r.bound)
            )?;
        }
        Ok(())
    }

    /// Parses the CSV columns back; subsets, iterates and diagnostics are
    /// not part of the export.
    pub fn read_csv<R: BufRead>(input: R) -> io::Result<Self> {
        let bad = |msg: String| io::Error::new(io::ErrorKind::InvalidData, msg);
        let mut lines = input.lines();
        match lines.next() {
            Some(Ok(h)) if h.trim() == CSV_HEADER => {}
            _ => return Err(bad("missing trace header".into())),
        }
        let mut records = Vec::new();
        for (n, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 8 {
                return Err(bad(format!("line {}: expected 8 columns", n + 2)));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| bad(format!("line {}: bad number `{s}`", n + 2)));
            let opt_num = |s: &str| if s.is_empty() { Ok(None) } else { num(s).map(Some) };
            records.push(TraceRecord {
                iter: cols[0].parse().map_err(|_| bad(format!("line {}: bad iter", n + 2)))?,
                t_sim_ms: num(cols[1])?,
                f: num(cols[2])?,
                f_encoded: num(cols[3])?,
                grad_norm: num(cols[4])?,
                alpha: opt_num(cols[5])?,
                overlap: if cols[6].is_empty() {
                    None
                } else {
                    Some(cols[6].parse().map_err(|_| bad(format!("line {}: bad overlap", n + 2)))?)
                },
                bound: opt_num(cols[7])?,
                a: Vec::new(),
                d: Vec::new(),
                w: Vec::new(),
                diagnostics: None,
            });
        }
        Ok(Self { records })
    }
}
