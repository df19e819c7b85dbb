use std::fs;
use std::path::{Path, PathBuf};

use super::{EncodingError, EncodingMatrix, Representation, Result, Scheme};
use crate::numerics::{load_cmx1, save_cmx1, DenseMatrix};

/// Parsed `scheme=..;n=..;beta_num=..;beta_den=..;seed=..` header.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sidecar {
    pub scheme: Scheme,
    pub n: usize,
    pub beta_num: usize,
    pub beta_den: usize,
    pub seed: u64,
}

pub fn sidecar_line(s: &EncodingMatrix) -> String {
    format!(
        "scheme={};n={};beta_num={};beta_den={};seed={}",
        s.scheme().tag(),
        s.n(),
        s.rows(),
        s.n(),
        s.seed()
    )
}

pub fn parse_sidecar(line: &str) -> Result<Sidecar> {
    let bad = |msg: String| EncodingError::BadSidecar(msg);
    let mut scheme = None;
    let mut n = None;
    let mut num = None;
    let mut den = None;
    let mut seed = None;
    for field in line.trim().split(';').filter(|f| !f.is_empty()) {
        let (key, value) = field
            .split_once('=')
            .ok_or_else(|| bad(format!("field `{field}` has no `=`")))?;
        let int = |v: &str| v.parse::<u64>().map_err(|_| bad(format!("`{key}` is not an integer")));
        match key {
            "scheme" => scheme = Some(value.parse::<Scheme>()?),
            "n" => n = Some(int(value)? as usize),
            "beta_num" => num = Some(int(value)? as usize),
            "beta_den" => den = Some(int(value)? as usize),
            "seed" => seed = Some(int(value)?),
            other => return Err(bad(format!("unknown field `{other}`"))),
        }
    }
    let missing = |k: &str| bad(format!("missing `{k}`"));
    Ok(Sidecar {
        scheme: scheme.ok_or_else(|| missing("scheme"))?,
        n: n.ok_or_else(|| missing("n"))?,
        beta_num: num.ok_or_else(|| missing("beta_num"))?,
        beta_den: den.ok_or_else(|| missing("beta_den"))?,
        seed: seed.ok_or_else(|| missing("seed"))?,
    })
}

fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta");
    PathBuf::from(s)
}

/// Writes the materialized `S` to `path` and the header to `path.meta`.
pub fn save_encoding(s: &EncodingMatrix, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    save_cmx1(path, &s.materialize())?;
    fs::write(sidecar_path(path), sidecar_line(s) + "\n")?;
    Ok(())
}

fn is_stacked_identity(d: &DenseMatrix, copies: usize) -> bool {
    let n = d.cols();
    d.rows() == copies * n
        && (0..d.rows()).all(|r| (0..n).all(|c| d.get(r, c) == if r % n == c { 1.0 } else { 0.0 }))
}

pub fn load_encoding(path: impl AsRef<Path>) -> Result<EncodingMatrix> {
    let path = path.as_ref();
    let header = parse_sidecar(&fs::read_to_string(sidecar_path(path))?)?;
    let dense = load_cmx1(path)?;
    if dense.rows() != header.beta_num || dense.cols() != header.n || header.beta_den != header.n {
        return Err(EncodingError::BadSidecar(format!(
            "header says {}x{} but matrix is {}x{}",
            header.beta_num,
            header.n,
            dense.rows(),
            dense.cols()
        )));
    }
    let repr = match header.scheme {
        Scheme::Identity if is_stacked_identity(&dense, 1) => Representation::Identity,
        Scheme::Replication
            if dense.rows() % dense.cols() == 0
                && is_stacked_identity(&dense, dense.rows() / dense.cols()) =>
        {
            Representation::Replicated {
                copies: dense.rows() / dense.cols(),
            }
        }
        _ => Representation::Dense(dense),
    };
    Ok(EncodingMatrix::from_parts(
        header.scheme,
        header.n,
        header.beta_num,
        header.seed,
        repr,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoding::{build_replication, build_steiner_etf};

    #[test]
    fn sidecar_round_trip() {
        let s = build_steiner_etf(4).unwrap();
        let line = sidecar_line(&s);
        assert_eq!(line, "scheme=steiner_etf;n=6;beta_num=16;beta_den=6;seed=4");
        let h = parse_sidecar(&line).unwrap();
        assert_eq!(h.scheme, Scheme::SteinerEtf);
        assert_eq!((h.n, h.beta_num, h.beta_den, h.seed), (6, 16, 6, 4));
        assert!(parse_sidecar("scheme=steiner_etf;n=6").is_err());
        assert!(parse_sidecar("scheme=dft;n=6;beta_num=1;beta_den=1;seed=0").is_err());
        assert!(parse_sidecar("scheme=identity;n=x;beta_num=1;beta_den=1;seed=0").is_err());
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.cmx");
        let s = build_steiner_etf(8).unwrap();
        save_encoding(&s, &path).unwrap();
        let back = load_encoding(&path).unwrap();
        assert_eq!(back.scheme(), Scheme::SteinerEtf);
        assert_eq!(back.materialize(), s.materialize());

        let r = build_replication(6, 2, 6).unwrap();
        save_encoding(&r, &path).unwrap();
        assert_eq!(load_encoding(&path).unwrap().replication_copies(), Some(2));
    }
}
