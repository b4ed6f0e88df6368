//! Binary PGM (P5) reading and writing.

use ndarray::Array2;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PgmError {
    #[error("not a binary PGM (missing P5 magic)")]
    BadMagic,
    #[error("malformed PGM header: {0}")]
    BadHeader(String),
    #[error("PGM payload has {actual} bytes, expected {expected}")]
    Truncated { expected: usize, actual: usize },
}

/// A decoded P5 image. Samples above 255 use 16-bit big-endian storage.
#[derive(Debug, Clone, PartialEq)]
pub struct Pgm {
    pub maxval: u16,
    pub pixels: Array2<u16>,
}

impl Pgm {
    pub fn to_f64(&self) -> Array2<f64> {
        self.pixels.mapv(f64::from)
    }
}

pub fn is_pgm(bytes: &[u8]) -> bool {
    bytes.len() >= 3 && &bytes[..2] == b"P5" && bytes[2].is_ascii_whitespace()
}

struct Header<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Header<'_> {
    fn skip_space_and_comments(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b == b'#' {
                while let Some(&c) = self.bytes.get(self.pos) {
                    self.pos += 1;
                    if c == b'\n' || c == b'\r' {
                        break;
                    }
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<usize, PgmError> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| PgmError::BadHeader(format!("missing {what}")))
    }
}

pub fn read_pgm(bytes: &[u8]) -> Result<Pgm, PgmError> {
    if !is_pgm(bytes) {
        return Err(PgmError::BadMagic);
    }
    let mut header = Header { bytes, pos: 2 };
    let width = header.number("width")?;
    let height = header.number("height")?;
    let maxval = header.number("maxval")?;
    if width == 0 || height == 0 {
        return Err(PgmError::BadHeader(format!("degenerate size {width}x{height}")));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(PgmError::BadHeader(format!("maxval {maxval} out of range")));
    }
    match bytes.get(header.pos) {
        Some(b) if b.is_ascii_whitespace() => header.pos += 1,
        _ => return Err(PgmError::BadHeader("no separator before raster".into())),
    }

    let wide = maxval > 255;
    let count = width * height;
    let expected = if wide { count * 2 } else { count };
    let raster = &bytes[header.pos..];
    if raster.len() < expected {
        return Err(PgmError::Truncated {
            expected,
            actual: raster.len(),
        });
    }
    let samples: Vec<u16> = if wide {
        raster[..expected]
            .chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]))
            .collect()
    } else {
        raster[..expected].iter().map(|&b| b as u16).collect()
    };
    Ok(Pgm {
        maxval: maxval as u16,
        pixels: Array2::from_shape_vec((height, width), samples).expect("sample count"),
    })
}

pub fn encode_pgm8(pixels: &Array2<u8>) -> Vec<u8> {
    let (h, w) = pixels.dim();
    let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
    out.extend(pixels.iter().copied());
    out
}

/// 16-bit P5 with the given maxval (at least the largest sample).
pub fn encode_pgm16(pixels: &Array2<u16>) -> Vec<u8> {
    let (h, w) = pixels.dim();
    let maxval = pixels.iter().copied().max().unwrap_or(0).max(256);
    let mut out = format!("P5\n{w} {h}\n{maxval}\n").into_bytes();
    out.extend(pixels.iter().flat_map(|v| v.to_be_bytes()));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn eight_bit_round_trip() {
        let px = array![[0u8, 10, 255], [3, 4, 5]];
        let decoded = read_pgm(&encode_pgm8(&px)).unwrap();
        assert_eq!(decoded.maxval, 255);
        assert_eq!(decoded.pixels, px.mapv(u16::from));
    }

    #[test]
    fn sixteen_bit_round_trip() {
        let px = array![[0u16, 1000], [65535, 7]];
        let decoded = read_pgm(&encode_pgm16(&px)).unwrap();
        assert_eq!(decoded.maxval, 65535);
        assert_eq!(decoded.pixels, px);
    }

    #[test]
    fn comments_in_header() {
        let bytes = b"P5\n# made by hand\n2 1\n# max\n255\n\x01\x02";
        assert_eq!(read_pgm(bytes).unwrap().pixels, array![[1u16, 2]]);
    }

    #[test]
    fn malformed_inputs() {
        assert_eq!(read_pgm(b"P2\n1 1\n255\n0"), Err(PgmError::BadMagic));
        assert!(matches!(read_pgm(b"P5\n2 2\n255\n\x00"), Err(PgmError::Truncated { .. })));
        assert!(matches!(read_pgm(b"P5\n0 2\n255\n"), Err(PgmError::BadHeader(_))));
        assert!(matches!(read_pgm(b"P5\n1 1\n70000\n\x00\x00"), Err(PgmError::BadHeader(_))));
    }
}
