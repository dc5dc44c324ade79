//! Middlebury `.flo` optical-flow files.
//!
//! Layout: `f32` magic 202021.25, `i32` width, `i32` height, then row-major
//! interleaved `f32` (u, v) pairs. Everything little-endian.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::field::MotionField;
use crate::raster::Raster;

pub const FLO_MAGIC: f32 = 202021.25;
const HEADER_LEN: usize = 12;

pub fn encode_flo(field: &MotionField) -> Vec<u8> {
    let (w, h) = field.dims();
    let mut out = Vec::with_capacity(HEADER_LEN + w * h * 8);
    out.extend_from_slice(&FLO_MAGIC.to_le_bytes());
    out.extend_from_slice(&(w as i32).to_le_bytes());
    out.extend_from_slice(&(h as i32).to_le_bytes());
    for p in field.data.data() {
        out.extend_from_slice(&(p[0] as f32).to_le_bytes());
        out.extend_from_slice(&(p[1] as f32).to_le_bytes());
    }
    out
}

/// Parse `.flo` bytes. Every pixel of the result is valid.
pub fn decode_flo(bytes: &[u8]) -> Result<MotionField> {
    if bytes.len() < 4 {
        return Err(Error::TruncatedFile {
            expected: HEADER_LEN,
            found: bytes.len(),
        });
    }
    let magic = f32::from_le_bytes(bytes[0..4].try_into().unwrap());
    if magic != FLO_MAGIC {
        return Err(Error::BadMagic(magic));
    }
    if bytes.len() < HEADER_LEN {
        return Err(Error::TruncatedFile {
            expected: HEADER_LEN,
            found: bytes.len(),
        });
    }
    let w = i32::from_le_bytes(bytes[4..8].try_into().unwrap());
    let h = i32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if w < 0 || h < 0 {
        return Err(Error::Format {
            format: "flo",
            reason: format!("negative dimensions {w}x{h}"),
        });
    }
    let (w, h) = (w as usize, h as usize);
    let expected = HEADER_LEN + w * h * 8;
    if bytes.len() < expected {
        return Err(Error::TruncatedFile {
            expected,
            found: bytes.len(),
        });
    }
    let body = &bytes[HEADER_LEN..expected];
    let data: Vec<[f64; 2]> = body
        .chunks_exact(8)
        .map(|c| {
            let u = f32::from_le_bytes(c[0..4].try_into().unwrap());
            let v = f32::from_le_bytes(c[4..8].try_into().unwrap());
            [u as f64, v as f64]
        })
        .collect();
    Ok(MotionField {
        data: Raster::from_vec(w, h, data)?,
        valid: Raster::filled(w, h, true),
    })
}

pub fn write_flo(field: &MotionField, path: impl AsRef<Path>) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    f.write_all(&encode_flo(field))?;
    f.flush()?;
    Ok(())
}

pub fn read_flo(path: impl AsRef<Path>) -> Result<MotionField> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    decode_flo(&bytes)
}
