//! Binary PGM (P5, 8-bit) export of frames and patches.
//!
//! Values are scaled linearly so the array maximum maps to 255; the scale is
//! written in a comment line (`# evattn scale=<max>`) so pixel values can be
//! mapped back as `byte / 255 * max`. An all-zero array is written with
//! `scale=0`.

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct PgmImage {
    pub width: usize,
    pub height: usize,
    pub maxval: u16,
    /// Array maximum recorded in the comment line, if present.
    pub scale: Option<f64>,
    pub pixels: Vec<u8>,
}

impl PgmImage {
    /// Pixel values mapped back to the original range (exact only up to the
    /// 8-bit quantization).
    pub fn to_values(&self) -> Array2<f64> {
        let scale = self.scale.unwrap_or(f64::from(self.maxval));
        Array2::from_shape_fn((self.height, self.width), |(y, x)| {
            f64::from(self.pixels[y * self.width + x]) / f64::from(self.maxval) * scale
        })
    }
}

pub fn encode_pgm(values: ArrayView2<f64>) -> Vec<u8> {
    let (h, w) = values.dim();
    let max = values.iter().copied().fold(0.0f64, f64::max);
    let mut out = format!("P5\n# evattn scale={max:e}\n{w} {h}\n255\n").into_bytes();
    out.reserve(w * h);
    for &v in values.iter() {
        let byte = if max > 0.0 {
            (v.max(0.0) / max * 255.0).round().clamp(0.0, 255.0) as u8
        } else {
            0
        };
        out.push(byte);
    }
    out
}

fn bad(reason: impl Into<String>) -> Error {
    Error::Decode {
        offset: 0,
        reason: format!("pgm: {}", reason.into()),
    }
}

/// Reads an 8-bit P5 image, collecting the `scale=` comment when present.
pub fn decode_pgm(bytes: &[u8]) -> Result<PgmImage> {
    let mut pos = 0;
    let mut scale = None;
    let mut tokens = Vec::with_capacity(4);
    while tokens.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos >= bytes.len() {
            return Err(bad("truncated header"));
        }
        if bytes[pos] == b'#' {
            let end = bytes[pos..]
                .iter()
                .position(|&b| b == b'\n')
                .map_or(bytes.len(), |i| pos + i);
            let comment = String::from_utf8_lossy(&bytes[pos + 1..end]);
            if let Some(v) = comment.trim().strip_prefix("evattn scale=") {
                scale = v.trim().parse::<f64>().ok();
            }
            pos = end;
            continue;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        tokens.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    if tokens[0] != "P5" {
        return Err(bad(format!("unsupported magic {}", tokens[0])));
    }
    let parse = |s: &str| s.parse::<usize>().map_err(|_| bad(format!("invalid number {s}")));
    let (width, height, maxval) = (parse(&tokens[1])?, parse(&tokens[2])?, parse(&tokens[3])?);
    if maxval == 0 || maxval > 255 {
        return Err(bad(format!("unsupported maxval {maxval}")));
    }
    // single whitespace byte separates the header from the raster
    pos += 1;
    let need = width * height;
    if bytes.len() < pos + need {
        return Err(bad("truncated raster"));
    }
    Ok(PgmImage {
        width,
        height,
        maxval: maxval as u16,
        scale,
        pixels: bytes[pos..pos + need].to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_preserves_shape_and_scale() {
        let a = Array2::from_shape_fn((3, 4), |(y, x)| (y * 4 + x) as f64 / 2.0);
        let img = decode_pgm(&encode_pgm(a.view())).unwrap();
        assert_eq!((img.width, img.height, img.maxval), (4, 3, 255));
        assert_eq!(img.scale, Some(5.5));
        assert_eq!(img.pixels[11], 255);
        assert_eq!(img.pixels[0], 0);
        let back = img.to_values();
        for (v, w) in a.iter().zip(back.iter()) {
            assert!((v - w).abs() <= 5.5 / 255.0);
        }
    }

    #[test]
    fn zero_image() {
        let a = Array2::<f64>::zeros((2, 2));
        let img = decode_pgm(&encode_pgm(a.view())).unwrap();
        assert_eq!(img.pixels, vec![0; 4]);
        assert_eq!(img.scale, Some(0.0));
    }

    #[test]
    fn rejects_other_formats() {
        assert!(decode_pgm(b"P2\n1 1\n255\n0").is_err());
        assert!(decode_pgm(b"P5\n2 2\n255\n\x00").is_err());
    }
}
