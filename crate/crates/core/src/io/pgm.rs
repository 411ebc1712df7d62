use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Matrix;

/// 8-bit grayscale image, rows top to bottom.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl GrayImage {
    /// Linear min-max scaling of `m` (row `i` becomes image row `i`); a
    /// constant matrix renders black.
    pub fn from_matrix(m: &Matrix) -> Self {
        let (lo, hi) = m
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        let span = hi - lo;
        let mut pixels = Vec::with_capacity(m.len());
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                let v = if span > 0.0 {
                    ((m[(i, j)] - lo) / span * 255.0).round() as u8
                } else {
                    0
                };
                pixels.push(v);
            }
        }
        GrayImage {
            width: m.ncols(),
            height: m.nrows(),
            pixels,
        }
    }

    /// Mask render: flagged entries black, everything else white.
    pub fn from_mask(mask: &Matrix) -> Self {
        let mut pixels = Vec::with_capacity(mask.len());
        for i in 0..mask.nrows() {
            for j in 0..mask.ncols() {
                pixels.push(if mask[(i, j)] != 0.0 { 0 } else { 255 });
            }
        }
        GrayImage {
            width: mask.ncols(),
            height: mask.nrows(),
            pixels,
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.pixels);
        out
    }

    pub fn decode(bytes: &[u8], path: &Path) -> Result<Self> {
        let bad = |msg: &str| Error::format(path, msg);
        let mut pos = 0;
        let mut fields = Vec::with_capacity(4);
        while fields.len() < 4 {
            while pos < bytes.len() && (bytes[pos].is_ascii_whitespace() || bytes[pos] == b'#') {
                if bytes[pos] == b'#' {
                    while pos < bytes.len() && bytes[pos] != b'\n' {
                        pos += 1;
                    }
                } else {
                    pos += 1;
                }
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err(bad("truncated header"));
            }
            fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad("bad header"))?);
        }
        if fields[0] != "P5" {
            return Err(bad("not a binary PGM (P5)"));
        }
        let num = |s: &str| s.parse::<usize>().map_err(|_| bad("bad header number"));
        let (width, height, maxval) = (num(fields[1])?, num(fields[2])?, num(fields[3])?);
        if maxval == 0 || maxval > 255 {
            return Err(bad("only 8-bit PGM is supported"));
        }
        // single whitespace byte separates the header from the raster
        let pixels = bytes.get(pos + 1..).unwrap_or_default();
        if pixels.len() != width * height {
            return Err(bad(&format!("raster has {} bytes, expected {}", pixels.len(), width * height)));
        }
        Ok(GrayImage {
            width,
            height,
            pixels: pixels.to_vec(),
        })
    }

    pub fn to_matrix(&self) -> Matrix {
        Matrix::from_fn(self.height, self.width, |i, j| self.pixels[i * self.width + j] as f64)
    }
}

pub fn write_pgm(path: impl AsRef<Path>, img: &GrayImage) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, img.encode()).map_err(|e| Error::io(path, e))
}

pub fn read_pgm(path: impl AsRef<Path>) -> Result<GrayImage> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    GrayImage::decode(&bytes, path)
}

/// Binary signal from a PGM: pixels brighter than half scale are 1.
pub fn read_pgm_mask(path: impl AsRef<Path>) -> Result<Matrix> {
    let img = read_pgm(path)?;
    Ok(img.to_matrix().map(|v| if v > 127.0 { 1.0 } else { 0.0 }))
}
