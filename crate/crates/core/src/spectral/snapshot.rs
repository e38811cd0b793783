//! Binary field snapshots.
//!
//! Layout, all little-endian:
//!
//! | bytes | content |
//! |-------|---------|
//! | 4 | magic `VORT` |
//! | 4 | `u32` version, currently 1 |
//! | 4 | `u32` n |
//! | 8 | `f64` torus scale N |
//! | 8 | `f64` time |
//! | 16·n² | `(f64 re, f64 im)` per coefficient |
//!
//! Coefficients are stored row-major: entry `a * n + b` holds the mode
//! `k = (m(a), m(b)) / N` with `m(a) = a` for `a < n/2` and `a - n` otherwise.

use std::fs;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use num_complex::Complex64;

use super::field::{Field, VorticityState};
use super::grid::{Grid, GridSpec};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"VORT";
pub const VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 4 + 8 + 8;

pub fn encode(state: &VorticityState) -> Vec<u8> {
    let grid = state.grid();
    let mut out = Vec::with_capacity(HEADER_LEN + 16 * grid.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(grid.n() as u32).to_le_bytes());
    out.extend_from_slice(&grid.spec().scale.to_le_bytes());
    out.extend_from_slice(&state.time.to_le_bytes());
    for c in state.field.coeffs() {
        out.extend_from_slice(&c.re.to_le_bytes());
        out.extend_from_slice(&c.im.to_le_bytes());
    }
    out
}

/// Decodes a snapshot onto `grid`, or onto a default 2/3-dealiased grid
/// built from the header when `grid` is `None`.
pub fn decode(bytes: &[u8], grid: Option<&Arc<Grid>>) -> Result<VorticityState> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Format(format!("truncated header: {} bytes", bytes.len())));
    }
    if &bytes[0..4] != MAGIC {
        return Err(Error::Format(format!("bad magic {:?}", &bytes[0..4])));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
    let version = u32_at(4);
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let n = u32_at(8) as usize;
    let scale = f64_at(12);
    let time = f64_at(20);
    let grid = match grid {
        Some(g) => {
            if g.n() != n || g.spec().scale != scale {
                return Err(Error::Shape(format!(
                    "snapshot is {n}x{n} at scale {scale}, expected {}x{} at scale {}",
                    g.n(),
                    g.n(),
                    g.spec().scale
                )));
            }
            g.clone()
        }
        None => Grid::new(GridSpec::new(n, scale)?)?,
    };
    let expected = HEADER_LEN + 16 * n * n;
    if bytes.len() != expected {
        return Err(Error::Format(format!(
            "payload length {} does not match {expected} for n = {n}",
            bytes.len()
        )));
    }
    let coeffs = bytes[HEADER_LEN..]
        .chunks_exact(16)
        .map(|ch| {
            Complex64::new(
                f64::from_le_bytes(ch[0..8].try_into().unwrap()),
                f64::from_le_bytes(ch[8..16].try_into().unwrap()),
            )
        })
        .collect();
    Ok(VorticityState::new(Field::from_coeffs(&grid, coeffs)?, time))
}

pub fn save(state: &VorticityState, path: &Path) -> Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(&encode(state))?;
    Ok(())
}

pub fn load(path: &Path, grid: Option<&Arc<Grid>>) -> Result<VorticityState> {
    decode(&fs::read(path)?, grid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn state() -> VorticityState {
        let g = Grid::new(GridSpec::new(16, 1.0).unwrap()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        VorticityState::new(Field::random(&g, 4.0, 0.3, &mut rng), 1.25)
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let s = state();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("w.vort");
        save(&s, &p).unwrap();
        let back = load(&p, Some(s.grid())).unwrap();
        assert_eq!(back, s);
        let back = load(&p, None).unwrap();
        assert_eq!(back.field.coeffs(), s.field.coeffs());
    }

    #[test]
    fn header_layout() {
        let bytes = encode(&state());
        assert_eq!(&bytes[0..4], b"VORT");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 16);
        assert_eq!(f64::from_le_bytes(bytes[20..28].try_into().unwrap()), 1.25);
        assert_eq!(bytes.len(), 28 + 16 * 256);
    }

    #[test]
    fn corrupt_magic_and_truncation() {
        let mut bytes = encode(&state());
        bytes[0] = b'X';
        assert!(matches!(decode(&bytes, None), Err(Error::Format(_))));
        let bytes = encode(&state());
        assert!(matches!(decode(&bytes[..100], None), Err(Error::Format(_))));
        let mut bytes = encode(&state());
        bytes[4] = 2;
        assert!(matches!(decode(&bytes, None), Err(Error::Format(_))));
    }

    #[test]
    fn grid_mismatch_is_shape_error() {
        let bytes = encode(&state());
        let other = Grid::new(GridSpec::new(32, 1.0).unwrap()).unwrap();
        assert!(matches!(decode(&bytes, Some(&other)), Err(Error::Shape(_))));
    }
}
