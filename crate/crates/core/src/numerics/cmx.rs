//! `CMX1` binary matrix files: magic `CMX1`, rows and cols as little-endian
//! `u64`, then row-major little-endian `f64` entries.

use std::fs::File;
use std::io::{BufReader, BufWriter, ErrorKind, Read, Write};
use std::path::Path;

use super::matrix::DenseMatrix;
use super::{NumericsError, Result};

pub const CMX1_MAGIC: [u8; 4] = *b"CMX1";

// 2^31 entries (16 GiB) is far beyond anything this crate produces.
const MAX_ENTRIES: u128 = 1 << 31;

pub fn write_cmx1<W: Write>(mut w: W, m: &DenseMatrix) -> Result<()> {
    w.write_all(&CMX1_MAGIC)?;
    w.write_all(&(m.rows() as u64).to_le_bytes())?;
    w.write_all(&(m.cols() as u64).to_le_bytes())?;
    for x in m.data() {
        w.write_all(&x.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

fn read_exact_or_truncated<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        ErrorKind::UnexpectedEof => NumericsError::Truncated,
        _ => NumericsError::Io(e),
    })
}

pub fn read_cmx1<R: Read>(mut r: R) -> Result<DenseMatrix> {
    let mut magic = [0u8; 4];
    read_exact_or_truncated(&mut r, &mut magic)?;
    if magic != CMX1_MAGIC {
        return Err(NumericsError::BadMagic);
    }
    let mut word = [0u8; 8];
    read_exact_or_truncated(&mut r, &mut word)?;
    let rows = u64::from_le_bytes(word);
    read_exact_or_truncated(&mut r, &mut word)?;
    let cols = u64::from_le_bytes(word);
    let entries = rows as u128 * cols as u128;
    if entries > MAX_ENTRIES {
        return Err(NumericsError::Oversize(entries));
    }
    let mut data = Vec::with_capacity(entries as usize);
    for _ in 0..entries {
        read_exact_or_truncated(&mut r, &mut word)?;
        data.push(f64::from_le_bytes(word));
    }
    DenseMatrix::new(rows as usize, cols as usize, data)
}

pub fn save_cmx1(path: impl AsRef<Path>, m: &DenseMatrix) -> Result<()> {
    write_cmx1(BufWriter::new(File::create(path)?), m)
}

pub fn load_cmx1(path: impl AsRef<Path>) -> Result<DenseMatrix> {
    read_cmx1(BufReader::new(File::open(path)?))
}
