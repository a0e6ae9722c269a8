//! HF01 height-field files and PGM previews.
//!
//! HF01 layout, little-endian:
//!
//! ```text
//! "HF01"  r: u32  rho: f64  cells: r*r f32 (row-major, NaN = hole)
//! ["CNT1" counts: r*r u32]
//! ```
//!
//! The optional count trailer keeps per-cell projection counts so a field
//! written by one stage carries everything the next stage needs.

use std::fs;
use std::path::Path;

use super::HeightField;
use crate::error::Location;
use crate::{Error, Result};

pub const MAGIC: &[u8; 4] = b"HF01";
const COUNTS_MAGIC: &[u8; 4] = b"CNT1";

pub fn encode(hf: &HeightField, with_counts: bool) -> Vec<u8> {
    let n = hf.cells().len();
    let mut out = Vec::with_capacity(16 + 8 * n);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(hf.resolution() as u32).to_le_bytes());
    out.extend_from_slice(&hf.density().to_le_bytes());
    for &c in hf.cells() {
        let v = if c.is_nan() { f32::NAN } else { c as f32 };
        out.extend_from_slice(&v.to_le_bytes());
    }
    if with_counts {
        out.extend_from_slice(COUNTS_MAGIC);
        for &c in hf.counts() {
            out.extend_from_slice(&c.to_le_bytes());
        }
    }
    out
}

/// Decodes an HF01 buffer; `path` only labels errors.
pub fn decode(bytes: &[u8], path: &Path) -> Result<HeightField> {
    let err = |at: usize, m: String| Error::parse(path, Location::Byte(at as u64), m);
    if bytes.len() < 16 || &bytes[..4] != MAGIC {
        return Err(err(0, "expected HF01 magic".into()));
    }
    let r = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes")) as usize;
    let density = f64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes"));
    if r < 2 {
        return Err(err(4, format!("resolution {r} below 2")));
    }
    let n = r.checked_mul(r).ok_or_else(|| err(4, "resolution overflow".into()))?;
    let cells_end = 16 + 4 * n;
    if bytes.len() < cells_end {
        return Err(err(bytes.len(), format!("truncated: {n} cells need {cells_end} bytes")));
    }
    let cells: Vec<f64> = bytes[16..cells_end]
        .chunks_exact(4)
        .map(|c| {
            let v = f32::from_le_bytes(c.try_into().expect("4 bytes"));
            if v.is_nan() {
                f64::NAN
            } else {
                v as f64
            }
        })
        .collect();
    if let Some(i) = cells.iter().position(|c| c.is_infinite()) {
        return Err(err(16 + 4 * i, "infinite cell value".into()));
    }
    let counts = if bytes.len() == cells_end {
        cells.iter().map(|c| (!c.is_nan()) as u32).collect()
    } else {
        let rest = &bytes[cells_end..];
        if rest.len() != 4 + 4 * n || &rest[..4] != COUNTS_MAGIC {
            return Err(err(cells_end, "expected end of file or a CNT1 count trailer".into()));
        }
        rest[4..]
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect()
    };
    HeightField::new(r, density, cells, counts).map_err(|e| err(cells_end, e.to_string()))
}

/// Writes an HF01 file including the count trailer.
pub fn write_hf01(path: impl AsRef<Path>, hf: &HeightField) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode(hf, true)).map_err(|e| Error::io(path, e))
}

pub fn read_hf01(path: impl AsRef<Path>) -> Result<HeightField> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes, path)
}

/// Binary 8-bit PGM: known values min-max scaled into `1..=255`, holes 0.
/// The top image row is the largest `v`.
pub fn encode_pgm(hf: &HeightField) -> Vec<u8> {
    let r = hf.resolution();
    let known = hf.cells().iter().filter(|c| !c.is_nan());
    let (lo, hi) = known.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &c| {
        (lo.min(c), hi.max(c))
    });
    let mut out = format!("P5\n{r} {r}\n255\n").into_bytes();
    for y in (0..r).rev() {
        for x in 0..r {
            let px = match hf.get(x, y) {
                None => 0u8,
                Some(_) if hi <= lo => 128,
                Some(v) => (1.0 + 254.0 * (v - lo) / (hi - lo)).round() as u8,
            };
            out.push(px);
        }
    }
    out
}

pub fn write_pgm(path: impl AsRef<Path>, hf: &HeightField) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_pgm(hf)).map_err(|e| Error::io(path, e))
}
