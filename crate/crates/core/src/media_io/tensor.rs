//! Rank-4 `f32` tensors and their binary container.
//!
//! Container: 8-byte magic `UVTCT4\0\0`, u32 rank (always 4), four u32 dims,
//! then the row-major f32 payload. All integers and floats little-endian.

use std::path::Path;

use crate::error::{Error, Result};

pub const TENSOR_MAGIC: &[u8; 8] = b"UVTCT4\0\0";
const HEADER_LEN: usize = 8 + 4 + 16;

/// Shape `(T, C, H, W)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor4 {
    shape: [usize; 4],
    data: Vec<f32>,
}

impl Tensor4 {
    pub fn new(shape: [usize; 4], data: Vec<f32>) -> Result<Self> {
        if shape.contains(&0) {
            return Err(Error::invalid(format!("zero-size dimension in {shape:?}")));
        }
        let n = element_count(shape).ok_or_else(|| Error::invalid("tensor dimension overflow"))?;
        if n != data.len() {
            return Err(Error::invalid(format!(
                "tensor of shape {shape:?} needs {n} values, got {}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("tensor contains non-finite values"));
        }
        Ok(Tensor4 { shape, data })
    }

    pub fn from_fn(shape: [usize; 4], mut f: impl FnMut([usize; 4]) -> f32) -> Result<Self> {
        let [t, c, h, w] = shape;
        let mut data = Vec::with_capacity(t * c * h * w);
        for i in 0..t {
            for j in 0..c {
                for y in 0..h {
                    for x in 0..w {
                        data.push(f([i, j, y, x]));
                    }
                }
            }
        }
        Self::new(shape, data)
    }

    pub fn shape(&self) -> [usize; 4] {
        self.shape
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn plane_len(&self) -> usize {
        self.shape[2] * self.shape[3]
    }

    /// Spatial slice for frame `t`, channel `c`.
    pub fn plane(&self, t: usize, c: usize) -> &[f32] {
        let n = self.plane_len();
        let o = (t * self.shape[1] + c) * n;
        &self.data[o..o + n]
    }

    pub fn get(&self, idx: [usize; 4]) -> f32 {
        let [_, c, h, w] = self.shape;
        self.data[((idx[0] * c + idx[1]) * h + idx[2]) * w + idx[3]]
    }

    pub fn map(&self, f: impl Fn(f32) -> f32) -> Tensor4 {
        Tensor4 {
            shape: self.shape,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }
}

fn element_count(shape: [usize; 4]) -> Option<usize> {
    shape.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d))
}

pub fn decode_tensor4(bytes: &[u8]) -> Result<Tensor4> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Truncated {
            what: "tensor header",
            expected: HEADER_LEN,
            found: bytes.len(),
        });
    }
    if &bytes[..8] != TENSOR_MAGIC {
        return Err(Error::BadMagic {
            what: "tensor",
            found: String::from_utf8_lossy(&bytes[..8]).into_owned(),
        });
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()) as usize;
    let rank = u32_at(8);
    if rank != 4 {
        return Err(Error::Malformed {
            what: "tensor",
            message: format!("rank {rank}, expected 4"),
        });
    }
    let shape = [u32_at(12), u32_at(16), u32_at(20), u32_at(24)];
    if shape.contains(&0) {
        return Err(Error::Malformed {
            what: "tensor",
            message: format!("zero-size dimension in {shape:?}"),
        });
    }
    let expected = element_count(shape)
        .and_then(|n| n.checked_mul(4))
        .and_then(|n| n.checked_add(HEADER_LEN))
        .ok_or(Error::Malformed {
            what: "tensor",
            message: "dimension overflow".into(),
        })?;
    if bytes.len() < expected {
        return Err(Error::Truncated {
            what: "tensor payload",
            expected,
            found: bytes.len(),
        });
    }
    if bytes.len() > expected {
        return Err(Error::Malformed {
            what: "tensor",
            message: format!("{} trailing bytes", bytes.len() - expected),
        });
    }
    let data = bytes[HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Tensor4::new(shape, data)
}

pub fn encode_tensor4(t: &Tensor4) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + t.data.len() * 4);
    out.extend_from_slice(TENSOR_MAGIC);
    out.extend_from_slice(&4u32.to_le_bytes());
    for d in t.shape {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for v in &t.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn load_tensor4(path: impl AsRef<Path>) -> Result<Tensor4> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_tensor4(&bytes)
}

pub fn save_tensor4(path: impl AsRef<Path>, t: &Tensor4) -> Result<()> {
    if t.shape.iter().any(|&d| d > u32::MAX as usize) {
        return Err(Error::invalid("tensor dimension does not fit in u32"));
    }
    let path = path.as_ref();
    std::fs::write(path, encode_tensor4(t)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn header(rank: u32, dims: [u32; 4]) -> Vec<u8> {
        let mut b = TENSOR_MAGIC.to_vec();
        b.extend_from_slice(&rank.to_le_bytes());
        for d in dims {
            b.extend_from_slice(&d.to_le_bytes());
        }
        b
    }

    #[test]
    fn rank_must_be_four() {
        let mut b = header(3, [1, 1, 1, 1]);
        b.extend_from_slice(&0f32.to_le_bytes());
        assert!(matches!(decode_tensor4(&b), Err(Error::Malformed { .. })));
    }

    #[test]
    fn zero_dim_rejected() {
        let b = header(4, [2, 0, 8, 8]);
        assert!(decode_tensor4(&b).is_err());
        assert!(Tensor4::new([1, 0, 1, 1], vec![]).is_err());
    }

    #[test]
    fn overflow_rejected() {
        let b = header(4, [u32::MAX, u32::MAX, u32::MAX, u32::MAX]);
        assert!(matches!(decode_tensor4(&b), Err(Error::Malformed { .. })));
    }

    #[test]
    fn truncation_detected() {
        let t = Tensor4::from_fn([1, 2, 2, 2], |i| i.iter().sum::<usize>() as f32).unwrap();
        let b = encode_tensor4(&t);
        assert!(matches!(
            decode_tensor4(&b[..b.len() - 3]),
            Err(Error::Truncated { .. })
        ));
        assert_eq!(decode_tensor4(&b).unwrap(), t);
    }

    #[test]
    fn plane_indexing() {
        let t = Tensor4::from_fn([2, 3, 2, 2], |[a, b, y, x]| (a * 1000 + b * 100 + y * 10 + x) as f32)
            .unwrap();
        assert_eq!(t.plane(1, 2), &[1200.0, 1201.0, 1210.0, 1211.0]);
        assert_eq!(t.get([1, 1, 1, 0]), 1110.0);
    }
}
