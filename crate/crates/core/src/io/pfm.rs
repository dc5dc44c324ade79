//! Portable float map (`Pf` grayscale) reader and writer.
//!
//! Scanlines are stored bottom-to-top; a negative scale marks little-endian
//! data. Writing always produces little-endian.

use std::path::Path;

use crate::error::{Error, Result};
use crate::raster::Raster;

fn format_err(reason: impl Into<String>) -> Error {
    Error::Format {
        format: "pfm",
        reason: reason.into(),
    }
}

/// Read the next whitespace-delimited header token.
fn next_token<'a>(bytes: &'a [u8], pos: &mut usize) -> Result<&'a str> {
    while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    if start == *pos {
        return Err(format_err("unexpected end of header"));
    }
    std::str::from_utf8(&bytes[start..*pos]).map_err(|_| format_err("non-ascii header"))
}

pub fn decode_pfm(bytes: &[u8]) -> Result<Raster<f32>> {
    let mut pos = 0;
    let kind = next_token(bytes, &mut pos)?;
    let channels = match kind {
        "Pf" => 1,
        "PF" => 3,
        other => return Err(format_err(format!("unknown type `{other}`"))),
    };
    let w: usize = next_token(bytes, &mut pos)?
        .parse()
        .map_err(|_| format_err("bad width"))?;
    let h: usize = next_token(bytes, &mut pos)?
        .parse()
        .map_err(|_| format_err("bad height"))?;
    let scale: f32 = next_token(bytes, &mut pos)?
        .parse()
        .map_err(|_| format_err("bad scale"))?;
    // exactly one whitespace byte separates header and data
    pos += 1;
    let little = scale < 0.0;
    let need = w * h * channels * 4;
    if bytes.len() < pos + need {
        return Err(Error::TruncatedFile {
            expected: pos + need,
            found: bytes.len(),
        });
    }
    let body = &bytes[pos..pos + need];
    let mut out = Raster::filled(w, h, 0.0f32);
    for (k, chunk) in body.chunks_exact(4 * channels).enumerate() {
        let arr: [u8; 4] = chunk[0..4].try_into().unwrap();
        let val = if little {
            f32::from_le_bytes(arr)
        } else {
            f32::from_be_bytes(arr)
        };
        let row_from_bottom = k / w;
        let u = k % w;
        out.set(u, h - 1 - row_from_bottom, val);
    }
    Ok(out)
}

pub fn encode_pfm(r: &Raster<f32>) -> Vec<u8> {
    let (w, h) = r.dims();
    let mut out = format!("Pf\n{w} {h}\n-1.0\n").into_bytes();
    for v in (0..h).rev() {
        for u in 0..w {
            out.extend_from_slice(&r.get(u, v).to_le_bytes());
        }
    }
    out
}

pub fn read_pfm(path: impl AsRef<Path>) -> Result<Raster<f32>> {
    decode_pfm(&std::fs::read(path)?)
}

pub fn write_pfm(r: &Raster<f32>, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, encode_pfm(r))?;
    Ok(())
}
