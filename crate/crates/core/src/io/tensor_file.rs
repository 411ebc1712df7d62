use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const MAGIC: &str = "TENV1";

/// Serializes `t` as the text header `TENV1\n{order}\n{dims}\nLE f64\n`
/// followed by little-endian doubles in storage order.
pub fn encode_tensor(t: &Tensor) -> Vec<u8> {
    let dims: Vec<String> = t.dims().iter().map(|d| d.to_string()).collect();
    let header = format!("{MAGIC}\n{}\n{}\nLE f64\n", t.order(), dims.join(" "));
    let mut out = Vec::with_capacity(header.len() + 8 * t.len());
    out.extend_from_slice(header.as_bytes());
    for v in t.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_tensor(bytes: &[u8], path: &Path) -> Result<Tensor> {
    let bad = |msg: &str| Error::format(path, msg);
    let mut lines = Vec::with_capacity(4);
    let mut pos = 0;
    while lines.len() < 4 {
        let end = bytes[pos..]
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| bad("truncated header"))?;
        let line = std::str::from_utf8(&bytes[pos..pos + end]).map_err(|_| bad("header is not UTF-8"))?;
        lines.push(line);
        pos += end + 1;
    }
    if lines[0] != MAGIC {
        return Err(bad("bad magic, expected TENV1"));
    }
    let order: usize = lines[1].trim().parse().map_err(|_| bad("bad order line"))?;
    let dims = lines[2]
        .split_whitespace()
        .map(|d| d.parse::<usize>())
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|_| bad("bad dims line"))?;
    if dims.len() != order {
        return Err(bad(&format!("order {order} but {} dims", dims.len())));
    }
    if lines[3] != "LE f64" {
        return Err(bad("unsupported element type, expected \"LE f64\""));
    }
    let count = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| bad("dims overflow"))?;
    let payload = &bytes[pos..];
    if payload.len() != 8 * count {
        return Err(bad(&format!("payload has {} bytes, expected {}", payload.len(), 8 * count)));
    }
    let data = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    Tensor::new(dims, data)
}

pub fn write_tensor(path: impl AsRef<Path>, t: &Tensor) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_tensor(t)).map_err(|e| Error::io(path, e))
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<Tensor> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_tensor(&bytes, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_layout() {
        let t = Tensor::new(vec![2, 1], vec![1.0, -0.0]).unwrap();
        let bytes = encode_tensor(&t);
        assert!(bytes.starts_with(b"TENV1\n2\n2 1\nLE f64\n"));
        assert_eq!(bytes.len(), 19 + 16);
        let back = decode_tensor(&bytes, Path::new("mem")).unwrap();
        assert_eq!(back.data()[1].to_bits(), (-0.0f64).to_bits());
    }

    #[test]
    fn rejects_corruption() {
        let t = Tensor::zeros(&[3]);
        let mut bytes = encode_tensor(&t);
        assert!(decode_tensor(&bytes[..bytes.len() - 1], Path::new("m")).is_err());
        bytes[0] = b'X';
        assert!(matches!(decode_tensor(&bytes, Path::new("m")), Err(Error::Format { .. })));
    }
}
