//! `MSB1` single-image container: 20-byte little-endian header followed by
//! band-planar float32 pixels.

use std::path::Path;

use crate::{Error, Result};

use super::{MultispectralImage, BAND_COUNT};

pub const MSB_MAGIC: [u8; 4] = *b"MSB1";
pub const MSB_HEADER_LEN: usize = 20;
const DTYPE_F32: u32 = 1;

pub fn encode_msb(image: &MultispectralImage) -> Vec<u8> {
    let mut out = Vec::with_capacity(MSB_HEADER_LEN + image.data().len() * 4);
    out.extend_from_slice(&MSB_MAGIC);
    for v in [image.width() as u32, image.height() as u32, BAND_COUNT as u32, DTYPE_F32] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for v in image.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Decode an `.msb` payload. `path` is only used for error messages.
pub fn decode_msb(bytes: &[u8], path: &Path) -> Result<MultispectralImage> {
    let format = |reason: String| Error::Format { path: path.to_path_buf(), reason };
    if bytes.len() < MSB_HEADER_LEN {
        return Err(format(format!("file is {} bytes, shorter than the header", bytes.len())));
    }
    if bytes[..4] != MSB_MAGIC {
        return Err(format(format!("bad magic bytes {:02X?}", &bytes[..4])));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap()) as usize;
    let (width, height, bands, dtype) = (word(0), word(1), word(2), word(3));
    if bands != BAND_COUNT {
        return Err(format(format!("band count {bands}, expected {BAND_COUNT}")));
    }
    if dtype != DTYPE_F32 as usize {
        return Err(format(format!("unsupported dtype code {dtype}")));
    }
    let expected = width
        .checked_mul(height)
        .and_then(|p| p.checked_mul(BAND_COUNT * 4))
        .ok_or_else(|| format("dimensions overflow".into()))?;
    let payload = &bytes[MSB_HEADER_LEN..];
    if payload.len() != expected {
        return Err(format(format!("payload is {} bytes, expected {expected}", payload.len())));
    }
    let data: Vec<f32> = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    if let Some(i) = data.iter().position(|v| !(v.is_finite() && (0.0..=1.0).contains(v))) {
        return Err(Error::Load {
            file: path.to_path_buf(),
            reason: format!("pixel {i} has value {} outside [0, 1]", data[i]),
        });
    }
    MultispectralImage::new(width, height, data).map_err(|e| format(e.to_string()))
}
