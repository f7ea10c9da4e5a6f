//! Minimal binary PGM (P5) and PPM (P6) encoding.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PnmError {
    #[error("malformed header: {0}")]
    Header(String),
    #[error("truncated pixel data: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
}

/// Decoded greyscale image; samples widened to u16.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub maxval: u16,
    pub data: Vec<u16>,
}

fn header(magic: &str, width: usize, height: usize, maxval: u32) -> Vec<u8> {
    format!("{magic}\n{width} {height}\n{maxval}\n").into_bytes()
}

pub fn encode_pgm8(width: usize, height: usize, data: &[u8]) -> Vec<u8> {
    assert_eq!(data.len(), width * height, "pixel buffer size");
    let mut out = header("P5", width, height, 255);
    out.extend_from_slice(data);
    out
}

/// 16-bit samples are written big-endian, as the format requires.
pub fn encode_pgm16(width: usize, height: usize, data: &[u16]) -> Vec<u8> {
    assert_eq!(data.len(), width * height, "pixel buffer size");
    let mut out = header("P5", width, height, 65535);
    out.reserve(data.len() * 2);
    for v in data {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out
}

pub fn encode_ppm(width: usize, height: usize, data: &[[u8; 3]]) -> Vec<u8> {
    assert_eq!(data.len(), width * height, "pixel buffer size");
    let mut out = header("P6", width, height, 255);
    out.reserve(data.len() * 3);
    for px in data {
        out.extend_from_slice(px);
    }
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn skip_space_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                c if c.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    fn token(&mut self) -> Result<&'a str, PnmError> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(PnmError::Header("unexpected end of header".into()));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .map_err(|_| PnmError::Header("non-ASCII header token".into()))
    }

    fn number(&mut self, what: &str) -> Result<usize, PnmError> {
        let tok = self.token()?;
        tok.parse()
            .map_err(|_| PnmError::Header(format!("bad {what}: {tok:?}")))
    }
}

/// Decode a binary PGM with maxval up to 65535.
pub fn decode_pgm(bytes: &[u8]) -> Result<GrayImage, PnmError> {
    let mut cur = Cursor { bytes, pos: 0 };
    let magic = cur.token()?;
    if magic != "P5" {
        return Err(PnmError::Header(format!("expected P5 magic, found {magic:?}")));
    }
    let width = cur.number("width")?;
    let height = cur.number("height")?;
    let maxval = cur.number("maxval")?;
    if width == 0 || height == 0 {
        return Err(PnmError::Header("zero image dimension".into()));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(PnmError::Header(format!("maxval {maxval} out of range")));
    }
    // exactly one whitespace byte separates the header from the raster
    if cur.pos >= bytes.len() || !bytes[cur.pos].is_ascii_whitespace() {
        return Err(PnmError::Header("missing raster separator".into()));
    }
    let raster = &bytes[cur.pos + 1..];
    let n = width
        .checked_mul(height)
        .ok_or_else(|| PnmError::Header("image too large".into()))?;
    let wide = maxval > 255;
    let expected = if wide { n * 2 } else { n };
    if raster.len() < expected {
        return Err(PnmError::Truncated {
            expected,
            found: raster.len(),
        });
    }
    let data = if wide {
        raster[..expected]
            .chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]))
            .collect()
    } else {
        raster[..expected].iter().map(|&b| b as u16).collect()
    };
    Ok(GrayImage {
        width,
        height,
        maxval: maxval as u16,
        data,
    })
}
