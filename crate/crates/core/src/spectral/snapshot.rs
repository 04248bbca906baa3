//! `NSEF` field snapshots.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! magic      4 bytes  "NSEF"
//! version    u32      1
//! N          u32      modes per axis
//! count      u32      number of fields
//! payload    count × N² × 2 × (f64 re, f64 im)
//! ```
//!
//! Within a field, modes run in row-major wavenumber order: `k1` ascends
//! from `-N/2 + 1` to `N/2` in the outer loop and `k2` likewise in the inner
//! loop. Each mode stores component 1 then component 2. Masked modes and the
//! mean mode are written as zeros.

use std::io::{self, Read, Write};
use std::sync::Arc;

use num_complex::Complex64;
use thiserror::Error;

use super::{SpectralError, SpectralField, SpectralSpace};

pub const MAGIC: &[u8; 4] = b"NSEF";
pub const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum SnapshotError {
    #[error("snapshot i/o: {0}")]
    Io(#[from] io::Error),
    #[error("not an NSEF snapshot (bad magic)")]
    BadMagic,
    #[error("unsupported NSEF version {0}")]
    UnsupportedVersion(u32),
    #[error("snapshot has N={found}, expected N={expected}")]
    ModesMismatch { expected: usize, found: usize },
    #[error("invalid field {index} in snapshot: {source}")]
    InvalidField { index: usize, source: SpectralError },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SnapshotHeader {
    pub version: u32,
    pub modes_per_axis: usize,
    pub field_count: usize,
}

/// Storage indices in file order.
fn file_order(space: &SpectralSpace) -> impl Iterator<Item = usize> + '_ {
    let half = (space.modes_per_axis() / 2) as i64;
    (-half + 1..=half).flat_map(move |k1| {
        (-half + 1..=half).map(move |k2| space.index_of(k1, k2).expect("grid wavenumber"))
    })
}

pub fn write_snapshot<W: Write>(mut out: W, fields: &[SpectralField]) -> Result<(), SnapshotError> {
    let n = fields.first().map(|f| f.space().modes_per_axis()).unwrap_or(0);
    if let Some(bad) = fields.iter().find(|f| f.space().modes_per_axis() != n) {
        return Err(SnapshotError::ModesMismatch { expected: n, found: bad.space().modes_per_axis() });
    }
    out.write_all(MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    out.write_all(&(n as u32).to_le_bytes())?;
    out.write_all(&(fields.len() as u32).to_le_bytes())?;
    let mut buf = Vec::with_capacity(n * n * 32);
    for field in fields {
        buf.clear();
        for idx in file_order(field.space()) {
            for c in &field.coeffs()[idx] {
                buf.extend_from_slice(&c.re.to_le_bytes());
                buf.extend_from_slice(&c.im.to_le_bytes());
            }
        }
        out.write_all(&buf)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_header<R: Read>(input: &mut R) -> Result<SnapshotHeader, SnapshotError> {
    let mut magic = [0u8; 4];
    input.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(SnapshotError::BadMagic);
    }
    let version = read_u32(input)?;
    if version != VERSION {
        return Err(SnapshotError::UnsupportedVersion(version));
    }
    let n = read_u32(input)? as usize;
    let count = read_u32(input)? as usize;
    Ok(SnapshotHeader { version, modes_per_axis: n, field_count: count })
}

/// Reads every field, validating structure but keeping each bit as stored.
pub fn read_snapshot<R: Read>(mut input: R, space: &Arc<SpectralSpace>) -> Result<Vec<SpectralField>, SnapshotError> {
    let header = read_header(&mut input)?;
    if header.modes_per_axis != space.modes_per_axis() {
        return Err(SnapshotError::ModesMismatch { expected: space.modes_per_axis(), found: header.modes_per_axis });
    }
    let order: Vec<usize> = file_order(space).collect();
    let mut fields = Vec::with_capacity(header.field_count);
    let mut buf = vec![0u8; space.len() * 32];
    for index in 0..header.field_count {
        input.read_exact(&mut buf)?;
        let mut coeffs = vec![[Complex64::default(); 2]; space.len()];
        for (slot, chunk) in order.iter().zip(buf.chunks_exact(32)) {
            let f = |o: usize| f64::from_le_bytes(chunk[o..o + 8].try_into().expect("8 bytes"));
            coeffs[*slot] = [Complex64::new(f(0), f(8)), Complex64::new(f(16), f(24))];
        }
        let field = SpectralField::from_coeffs_checked(space, coeffs)
            .map_err(|source| SnapshotError::InvalidField { index, source })?;
        fields.push(field);
    }
    Ok(fields)
}

fn read_u32<R: Read>(input: &mut R) -> io::Result<u32> {
    let mut b = [0u8; 4];
    input.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::random_field;
    use rand_chacha::ChaCha8Rng;
    use rand_core::SeedableRng;

    #[test]
    fn header_layout_is_fixed() {
        let space = SpectralSpace::new(8).unwrap();
        let f = SpectralField::basis_mode(&space, 1, 0, false, 1.0).unwrap();
        let mut bytes = Vec::new();
        write_snapshot(&mut bytes, &[f.clone(), f]).unwrap();
        assert_eq!(&bytes[0..4], b"NSEF");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 8);
        assert_eq!(u32::from_le_bytes(bytes[12..16].try_into().unwrap()), 2);
        assert_eq!(bytes.len(), 16 + 2 * 64 * 32);
        // first stored mode is k = (-3, -3), second is (-3, -2)
        let k10 = 16 + ((1 + 3) * 8 + 3) * 32;
        let re2 = f64::from_le_bytes(bytes[k10 + 16..k10 + 24].try_into().unwrap());
        assert!((re2 - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let space = SpectralSpace::new(16).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let fields: Vec<_> = (0..3).map(|_| random_field(&space, &mut rng, 1.0, 1.0)).collect();
        let mut bytes = Vec::new();
        write_snapshot(&mut bytes, &fields).unwrap();
        let back = read_snapshot(bytes.as_slice(), &space).unwrap();
        assert_eq!(back, fields);
    }

    #[test]
    fn rejects_bad_input() {
        let space = SpectralSpace::new(8).unwrap();
        let other = SpectralSpace::new(16).unwrap();
        let f = SpectralField::basis_mode(&space, 1, 0, false, 1.0).unwrap();
        let mut bytes = Vec::new();
        write_snapshot(&mut bytes, &[f]).unwrap();
        assert!(matches!(read_snapshot(bytes.as_slice(), &other), Err(SnapshotError::ModesMismatch { .. })));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(read_snapshot(bad.as_slice(), &space), Err(SnapshotError::BadMagic)));
        let mut bad = bytes.clone();
        bad[4] = 9;
        assert!(matches!(read_snapshot(bad.as_slice(), &space), Err(SnapshotError::UnsupportedVersion(9))));
        let mut bad = bytes.clone();
        // poke the mean mode: k = (0,0) sits at row 3, column 3
        let off = 16 + (3 * 8 + 3) * 32;
        bad[off..off + 8].copy_from_slice(&1.0f64.to_le_bytes());
        assert!(matches!(read_snapshot(bad.as_slice(), &space), Err(SnapshotError::InvalidField { index: 0, .. })));
        assert!(read_snapshot(&bytes[..40], &space).is_err());
    }
}
