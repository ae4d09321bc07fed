//! Binary field snapshots.
//!
//! Layout, all little-endian: magic `JFLD`, version `u32`, `n` `u32`,
//! flags `u32`, then for each flat mode index in row-major order the four
//! `f64` values `re c1, im c1, re c2, im c2`.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::field::SpectralField;
use crate::grid::Grid;

pub const MAGIC: [u8; 4] = *b"JFLD";
pub const VERSION: u32 = 1;
const HEADER: usize = 16;

pub fn encode(field: &SpectralField) -> Vec<u8> {
    let grid = field.grid();
    let mut out = Vec::with_capacity(HEADER + 32 * grid.len());
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(grid.n() as u32).to_le_bytes());
    out.extend_from_slice(&0u32.to_le_bytes());
    let (c1, c2) = field.components();
    for (a, b) in c1.iter().zip(c2) {
        for x in [a.re, a.im, b.re, b.im] {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    out
}

fn u32_at(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(bytes[at..at + 4].try_into().expect("four bytes"))
}

pub fn decode(bytes: &[u8]) -> Result<SpectralField> {
    if bytes.len() < HEADER {
        return Err(Error::Format(format!(
            "snapshot of {} bytes is shorter than its header",
            bytes.len()
        )));
    }
    if bytes[..4] != MAGIC {
        return Err(Error::Format("snapshot magic is not JFLD".into()));
    }
    let version = u32_at(bytes, 4);
    if version != VERSION {
        return Err(Error::Format(format!(
            "snapshot version {version} is not supported (expected {VERSION})"
        )));
    }
    let n = u32_at(bytes, 8) as usize;
    let flags = u32_at(bytes, 12);
    if flags != 0 {
        return Err(Error::Format(format!("unknown snapshot flags {flags:#x}")));
    }
    let grid = Grid::new(n).map_err(|_| Error::Format(format!("invalid snapshot grid size {n}")))?;
    let expected = HEADER + 32 * grid.len();
    if bytes.len() != expected {
        return Err(Error::Format(format!(
            "snapshot has {} bytes, expected {expected} for n = {n}",
            bytes.len()
        )));
    }
    let mut c1 = Vec::with_capacity(grid.len());
    let mut c2 = Vec::with_capacity(grid.len());
    for chunk in bytes[HEADER..].chunks_exact(32) {
        let f = |i: usize| f64::from_le_bytes(chunk[8 * i..8 * i + 8].try_into().expect("eight bytes"));
        c1.push(Complex64::new(f(0), f(1)));
        c2.push(Complex64::new(f(2), f(3)));
    }
    SpectralField::from_components(grid, c1, c2)
}

pub fn write(path: &std::path::Path, field: &SpectralField) -> Result<()> {
    std::fs::write(path, encode(field))?;
    Ok(())
}

pub fn read(path: &std::path::Path) -> Result<SpectralField> {
    decode(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random::random_field;
    use rand::SeedableRng;

    #[test]
    fn round_trip_is_bit_exact() {
        let grid = Grid::new(16).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let f = random_field(grid, &mut rng, 1.0);
        let bytes = encode(&f);
        assert_eq!(bytes.len(), 16 + 32 * 256);
        let back = decode(&bytes).unwrap();
        let (a, b) = (f.components(), back.components());
        for (x, y) in a.0.iter().chain(a.1).zip(b.0.iter().chain(b.1)) {
            assert_eq!(x.re.to_bits(), y.re.to_bits());
            assert_eq!(x.im.to_bits(), y.im.to_bits());
        }
        assert_eq!(encode(&back), bytes);
    }

    #[test]
    fn header_layout() {
        let f = SpectralField::zeros(Grid::new(8).unwrap());
        let bytes = encode(&f);
        assert_eq!(&bytes[..4], b"JFLD");
        assert_eq!(&bytes[4..8], &1u32.to_le_bytes());
        assert_eq!(&bytes[8..12], &8u32.to_le_bytes());
        assert_eq!(&bytes[12..16], &[0, 0, 0, 0]);
    }

    #[test]
    fn malformed_input_is_rejected() {
        let f = SpectralField::zeros(Grid::new(8).unwrap());
        let good = encode(&f);
        assert!(decode(&good[..10]).is_err());
        assert!(decode(&good[..good.len() - 1]).is_err());
        let mut bad = good.clone();
        bad[0] = b'X';
        assert!(decode(&bad).is_err());
        let mut bad = good.clone();
        bad[4] = 2;
        assert!(decode(&bad).is_err());
        let mut bad = good.clone();
        bad[8] = 7;
        assert!(decode(&bad).is_err());
        let mut bad = good;
        bad[12] = 1;
        assert!(decode(&bad).is_err());
    }
}
