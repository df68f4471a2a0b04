//! Bit-exact persistence for scalar grid fields.
//!
//! Layout (all little-endian):
//!
//! | bytes      | content                         |
//! |------------|---------------------------------|
//! | 8          | magic `FFGRID01`                |
//! | 4          | `u32` dimension `d`, `2..=8`    |
//! | 8 d        | `u64` node counts               |
//! | 8 d        | `f64` axis minima               |
//! | 8          | `f64` spacing                   |
//! | 8 * nodes  | `f64` values, last axis fastest |

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::error::Result;
use crate::grid::{Grid, ScalarGridField};

pub const MAGIC: &[u8; 8] = b"FFGRID01";
const MAGIC_PREFIX: &[u8; 6] = b"FFGRID";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GridFormatError {
    #[error("not a grid file: bad magic at byte offset {offset}")]
    BadMagic { offset: usize },
    #[error("unsupported grid format version `{version}` at byte offset {offset}")]
    UnsupportedVersion { version: String, offset: usize },
    #[error("dimension {dimension} outside [2, 8] at byte offset {offset}")]
    BadDimension { dimension: u32, offset: usize },
    #[error("invalid header value at byte offset {offset}: {reason}")]
    BadHeader { offset: usize, reason: String },
    #[error("truncated file: needed {needed} bytes at byte offset {offset}, found {available}")]
    Truncated {
        offset: usize,
        needed: usize,
        available: usize,
    },
    #[error("{extra} trailing bytes after payload at byte offset {offset}")]
    TrailingBytes { offset: usize, extra: usize },
}

/// Exact encoded size of a field on `grid`.
pub fn encoded_len(grid: &Grid) -> usize {
    let d = grid.dim();
    8 + 4 + 8 * d + 8 * d + 8 + 8 * grid.len()
}

pub fn encode(field: &ScalarGridField) -> Vec<u8> {
    let grid = field.grid();
    let mut buf = Vec::with_capacity(encoded_len(grid));
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&(grid.dim() as u32).to_le_bytes());
    for &n in grid.nodes() {
        buf.extend_from_slice(&(n as u64).to_le_bytes());
    }
    for &m in grid.min() {
        buf.extend_from_slice(&m.to_le_bytes());
    }
    buf.extend_from_slice(&grid.h().to_le_bytes());
    for v in field.values() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    buf
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], GridFormatError> {
        let available = self.bytes.len() - self.pos;
        if available < n {
            return Err(GridFormatError::Truncated {
                offset: self.pos,
                needed: n,
                available,
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, GridFormatError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, GridFormatError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, GridFormatError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn decode(bytes: &[u8]) -> Result<ScalarGridField, GridFormatError> {
    let mut c = Cursor { bytes, pos: 0 };
    let magic = c.take(8).map_err(|_| GridFormatError::BadMagic { offset: 0 })?;
    if magic != MAGIC {
        if &magic[..6] == MAGIC_PREFIX {
            return Err(GridFormatError::UnsupportedVersion {
                version: String::from_utf8_lossy(&magic[6..]).into_owned(),
                offset: 0,
            });
        }
        return Err(GridFormatError::BadMagic { offset: 0 });
    }
    let d_offset = c.pos;
    let d = c.u32()?;
    if !(2..=8).contains(&d) {
        return Err(GridFormatError::BadDimension {
            dimension: d,
            offset: d_offset,
        });
    }
    let d = d as usize;
    let mut nodes = Vec::with_capacity(d);
    for _ in 0..d {
        let at = c.pos;
        let n = c.u64()?;
        if n == 0 || n > usize::MAX as u64 {
            return Err(GridFormatError::BadHeader {
                offset: at,
                reason: format!("node count {n}"),
            });
        }
        nodes.push(n as usize);
    }
    let mut min = Vec::with_capacity(d);
    for _ in 0..d {
        let at = c.pos;
        let m = c.f64()?;
        if !m.is_finite() {
            return Err(GridFormatError::BadHeader {
                offset: at,
                reason: format!("axis minimum {m}"),
            });
        }
        min.push(m);
    }
    let h_offset = c.pos;
    let h = c.f64()?;
    let total = nodes
        .iter()
        .try_fold(1usize, |acc, &n| acc.checked_mul(n))
        .and_then(|t| t.checked_mul(8))
        .ok_or(GridFormatError::BadHeader {
            offset: 12,
            reason: "node count overflow".into(),
        })?;
    let grid = Grid::from_nodes(&min, &nodes, h).map_err(|e| GridFormatError::BadHeader {
        offset: h_offset,
        reason: e.to_string(),
    })?;
    let payload = c.take(total)?;
    if c.pos != bytes.len() {
        return Err(GridFormatError::TrailingBytes {
            offset: c.pos,
            extra: bytes.len() - c.pos,
        });
    }
    let values = payload
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
        .collect();
    Ok(ScalarGridField::new(grid, values).expect("payload length checked"))
}

pub fn write_grid(field: &ScalarGridField, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&encode(field))?;
    w.flush()?;
    Ok(())
}

pub fn read_grid(path: &Path) -> Result<ScalarGridField> {
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    Ok(decode(&bytes)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn zeros_2x2() -> ScalarGridField {
        let g = Grid::from_nodes(&[0.0, -1.0], &[2, 2], 0.5).unwrap();
        ScalarGridField::filled(g, 0.0)
    }

    #[test]
    fn roundtrip_through_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.ffgrid");
        let f = zeros_2x2();
        write_grid(&f, &path).unwrap();
        let back = read_grid(&path).unwrap();
        assert_eq!(back, f);
        assert_eq!(back.grid().min(), &[0.0, -1.0]);
        assert_eq!(std::fs::metadata(&path).unwrap().len() as usize, encoded_len(f.grid()));
    }

    #[test]
    fn version_mismatch_reported_at_offset_zero() {
        let mut bytes = encode(&zeros_2x2());
        bytes[..8].copy_from_slice(b"FFGRID00");
        assert_eq!(
            decode(&bytes),
            Err(GridFormatError::UnsupportedVersion {
                version: "00".into(),
                offset: 0
            })
        );
        bytes[..8].copy_from_slice(b"NOTAGRID");
        assert_eq!(decode(&bytes), Err(GridFormatError::BadMagic { offset: 0 }));
    }

    #[test]
    fn truncation_and_dimension_errors_carry_offsets() {
        let bytes = encode(&zeros_2x2());
        let cut = &bytes[..bytes.len() - 3];
        match decode(cut) {
            Err(GridFormatError::Truncated { offset, .. }) => assert_eq!(offset, 8 + 4 + 16 + 16 + 8),
            other => panic!("{other:?}"),
        }
        let mut bad = bytes.clone();
        bad[8..12].copy_from_slice(&9u32.to_le_bytes());
        assert_eq!(
            decode(&bad),
            Err(GridFormatError::BadDimension {
                dimension: 9,
                offset: 8
            })
        );
        bad[8..12].copy_from_slice(&1u32.to_le_bytes());
        assert!(matches!(decode(&bad), Err(GridFormatError::BadDimension { .. })));
    }

    proptest! {
        #[test]
        fn roundtrip_is_bit_identical(
            nx in 1usize..6, ny in 1usize..6, nz in 0usize..4,
            seed in any::<u64>(),
            min0 in -10.0f64..10.0, h in 1e-3f64..2.0,
        ) {
            let nodes: Vec<usize> = if nz == 0 { vec![nx, ny] } else { vec![nx, ny, nz] };
            let min = vec![min0; nodes.len()];
            let g = Grid::from_nodes(&min, &nodes, h).unwrap();
            let mut s = seed;
            let vals: Vec<f64> = (0..g.len()).map(|_| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                match s >> 61 {
                    0 => f64::INFINITY,
                    1 => -0.0,
                    _ => f64::from_bits(s >> 2) ,
                }
            }).collect();
            let f = ScalarGridField::new(g, vals).unwrap();
            let bytes = encode(&f);
            prop_assert_eq!(bytes.len(), encoded_len(f.grid()));
            let back = decode(&bytes).unwrap();
            prop_assert_eq!(back.grid(), f.grid());
            let a: Vec<u64> = back.values().iter().map(|v| v.to_bits()).collect();
            let b: Vec<u64> = f.values().iter().map(|v| v.to_bits()).collect();
            prop_assert_eq!(a, b);
        }
    }
}
