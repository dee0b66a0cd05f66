//! Binary snapshots: `"MNLS1"`, then `n_max`, `m_quad`, `n_z` as `u64` and
//! `l_z` as `f64`, then `(re, im)` pairs in row-major (mode, k) order. All
//! numbers little-endian.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::Arc;

use num_complex::Complex64;

use super::{Space, SpectralField};
use crate::error::{Error, Result};

pub const SNAPSHOT_MAGIC: &[u8; 5] = b"MNLS1";

pub fn write_snapshot<W: Write>(mut w: W, f: &SpectralField) -> Result<()> {
    let sp = f.space();
    w.write_all(SNAPSHOT_MAGIC)?;
    w.write_all(&(sp.basis().n_max() as u64).to_le_bytes())?;
    w.write_all(&(sp.basis().m_quad() as u64).to_le_bytes())?;
    w.write_all(&(sp.n_z() as u64).to_le_bytes())?;
    w.write_all(&sp.zgrid().l_z().to_le_bytes())?;
    for c in f.coeffs() {
        w.write_all(&c.re.to_le_bytes())?;
        w.write_all(&c.im.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

struct Header {
    n_max: usize,
    m_quad: usize,
    n_z: usize,
    l_z: f64,
}

fn read_header<R: Read>(r: &mut R) -> Result<Header> {
    let mut magic = [0u8; 5];
    r.read_exact(&mut magic).map_err(|_| Error::Snapshot("truncated header".into()))?;
    if &magic != SNAPSHOT_MAGIC {
        return Err(Error::Snapshot("bad magic".into()));
    }
    let mut buf = [0u8; 8];
    let mut next = |r: &mut R| -> Result<[u8; 8]> {
        r.read_exact(&mut buf).map_err(|_| Error::Snapshot("truncated header".into()))?;
        Ok(buf)
    };
    let n_max = u64::from_le_bytes(next(r)?);
    let m_quad = u64::from_le_bytes(next(r)?);
    let n_z = u64::from_le_bytes(next(r)?);
    let l_z = f64::from_le_bytes(next(r)?);
    let small = |v: u64| usize::try_from(v).ok().filter(|&v| v <= 1 << 20);
    match (small(n_max), small(m_quad), small(n_z)) {
        (Some(n_max), Some(m_quad), Some(n_z)) => Ok(Header { n_max, m_quad, n_z, l_z }),
        _ => Err(Error::Snapshot("implausible dimensions".into())),
    }
}

fn read_body<R: Read>(r: &mut R, space: &Arc<Space>) -> Result<SpectralField> {
    let len = space.n_modes() * space.n_z();
    let mut coeffs = Vec::with_capacity(len);
    let mut buf = [0u8; 16];
    for _ in 0..len {
        r.read_exact(&mut buf).map_err(|_| Error::Snapshot("truncated coefficient data".into()))?;
        let re = f64::from_le_bytes(buf[..8].try_into().unwrap());
        let im = f64::from_le_bytes(buf[8..].try_into().unwrap());
        coeffs.push(Complex64::new(re, im));
    }
    if r.read(&mut buf)? != 0 {
        return Err(Error::Snapshot("trailing bytes".into()));
    }
    SpectralField::from_coeffs(space, coeffs)
}

/// Reads a snapshot, rebuilding its space (default dealiasing).
pub fn read_snapshot<R: Read>(mut r: R) -> Result<SpectralField> {
    let h = read_header(&mut r)?;
    let space = Space::new(h.n_max, h.m_quad, h.n_z, h.l_z).map_err(|e| Error::Snapshot(e.to_string()))?;
    read_body(&mut r, &space)
}

/// Reads a snapshot that must match `space`.
pub fn read_snapshot_into<R: Read>(mut r: R, space: &Arc<Space>) -> Result<SpectralField> {
    let h = read_header(&mut r)?;
    if h.n_max != space.basis().n_max() || h.m_quad != space.basis().m_quad() || h.n_z != space.n_z() || h.l_z != space.zgrid().l_z() {
        return Err(Error::SpaceMismatch);
    }
    read_body(&mut r, space)
}

pub fn save_snapshot(path: impl AsRef<Path>, f: &SpectralField) -> Result<()> {
    write_snapshot(BufWriter::new(File::create(path)?), f)
}

pub fn load_snapshot(path: impl AsRef<Path>) -> Result<SpectralField> {
    read_snapshot(BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bitwise() {
        let sp = Space::new(2, 6, 16, 20.0).unwrap();
        let f = SpectralField::random(&sp, 11);
        let mut bytes = Vec::new();
        write_snapshot(&mut bytes, &f).unwrap();
        assert_eq!(bytes.len(), 5 + 32 + 16 * 6 * 16);
        assert_eq!(&bytes[..5], b"MNLS1");
        assert_eq!(u64::from_le_bytes(bytes[5..13].try_into().unwrap()), 2);
        let g = read_snapshot(bytes.as_slice()).unwrap();
        assert_eq!(g.coeffs(), f.coeffs());
        let g = read_snapshot_into(bytes.as_slice(), &sp).unwrap();
        assert_eq!(g.coeffs(), f.coeffs());
        let other = Space::new(2, 6, 32, 20.0).unwrap();
        assert!(matches!(read_snapshot_into(bytes.as_slice(), &other), Err(Error::SpaceMismatch)));
    }

    #[test]
    fn rejects_corrupt_input() {
        assert!(matches!(read_snapshot(&b"MNLS2"[..]), Err(Error::Snapshot(_))));
        let sp = Space::new(1, 4, 4, 8.0).unwrap();
        let mut bytes = Vec::new();
        write_snapshot(&mut bytes, &SpectralField::zeros(&sp)).unwrap();
        assert!(read_snapshot(&bytes[..bytes.len() - 3]).is_err());
        bytes.push(0);
        assert!(read_snapshot(bytes.as_slice()).is_err());
    }
}
