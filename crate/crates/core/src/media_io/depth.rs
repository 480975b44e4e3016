//! Depth maps: grayscale PFM and 16-bit millimeter PNG.

use std::path::Path;

use crate::error::{Error, Result};

/// Depth in meters. Entries that are non-positive or NaN are invalid.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    height: usize,
    width: usize,
    values: Vec<f32>,
}

impl DepthMap {
    pub fn new(height: usize, width: usize, values: Vec<f32>) -> Result<Self> {
        if height == 0 || width == 0 || values.len() != height * width {
            return Err(Error::invalid(format!(
                "depth map {}x{} with {} values",
                width,
                height,
                values.len()
            )));
        }
        Ok(DepthMap {
            height,
            width,
            values,
        })
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn raw(&self, x: usize, y: usize) -> f32 {
        self.values[y * self.width + x]
    }

    /// Depth at pixel, or `None` when invalid.
    pub fn depth(&self, x: usize, y: usize) -> Option<f64> {
        let d = self.raw(x, y);
        (d.is_finite() && d > 0.0).then_some(d as f64)
    }

    pub fn is_valid(&self, x: usize, y: usize) -> bool {
        self.depth(x, y).is_some()
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }
}

fn malformed(message: impl Into<String>) -> Error {
    Error::Malformed {
        what: "pfm",
        message: message.into(),
    }
}

/// Reads one whitespace-terminated header line.
fn header_line<'a>(bytes: &'a [u8], pos: &mut usize) -> Result<&'a str> {
    let start = *pos;
    let end = bytes[start..]
        .iter()
        .position(|&b| b == b'\n')
        .map(|i| start + i)
        .ok_or_else(|| malformed("unterminated header"))?;
    *pos = end + 1;
    std::str::from_utf8(&bytes[start..end])
        .map(str::trim)
        .map_err(|_| malformed("non-utf8 header"))
}

pub fn decode_pfm(bytes: &[u8]) -> Result<DepthMap> {
    let mut pos = 0;
    let tag = header_line(bytes, &mut pos)?;
    if tag != "Pf" {
        return Err(Error::BadMagic {
            what: "pfm",
            found: tag.to_string(),
        });
    }
    let dims = header_line(bytes, &mut pos)?;
    let mut it = dims.split_whitespace();
    let width: usize = it
        .next()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| malformed(format!("bad dimensions line {dims:?}")))?;
    let height: usize = it
        .next()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| malformed(format!("bad dimensions line {dims:?}")))?;
    if width == 0 || height == 0 || it.next().is_some() {
        return Err(malformed(format!("bad dimensions line {dims:?}")));
    }
    let scale_line = header_line(bytes, &mut pos)?;
    let scale: f32 = scale_line
        .parse()
        .map_err(|_| malformed(format!("bad scale {scale_line:?}")))?;
    if scale == 0.0 || !scale.is_finite() {
        return Err(malformed("scale must be finite and non-zero"));
    }
    let little = scale < 0.0;

    let expected = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| malformed("dimension overflow"))?;
    let payload = &bytes[pos..];
    if payload.len() != expected {
        return Err(Error::Truncated {
            what: "pfm payload",
            expected,
            found: payload.len(),
        });
    }
    let mut values = vec![0f32; width * height];
    for (i, chunk) in payload.chunks_exact(4).enumerate() {
        let raw: [u8; 4] = chunk.try_into().unwrap();
        let v = if little {
            f32::from_le_bytes(raw)
        } else {
            f32::from_be_bytes(raw)
        };
        // stored bottom-up
        let (row, col) = (i / width, i % width);
        values[(height - 1 - row) * width + col] = v;
    }
    DepthMap::new(height, width, values)
}

/// Little-endian PFM, rows bottom-up.
pub fn encode_pfm(depth: &DepthMap) -> Vec<u8> {
    let mut out = format!("Pf\n{} {}\n-1.0\n", depth.width, depth.height).into_bytes();
    for row in (0..depth.height).rev() {
        for v in &depth.values[row * depth.width..(row + 1) * depth.width] {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn load_depth_pfm(path: impl AsRef<Path>) -> Result<DepthMap> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pfm(&bytes)
}

pub fn save_depth_pfm(path: impl AsRef<Path>, depth: &DepthMap) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_pfm(depth)).map_err(|e| Error::io(path, e))
}

/// 16-bit grayscale PNG in millimeters; zero means missing.
pub fn load_depth_png(path: impl AsRef<Path>) -> Result<DepthMap> {
    let path = path.as_ref();
    let img = image::open(path).map_err(|e| Error::Image {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let gray = img.into_luma16();
    let (w, h) = gray.dimensions();
    let values = gray.pixels().map(|p| p.0[0] as f32 / 1000.0).collect();
    DepthMap::new(h as usize, w as usize, values)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_by_two_round_trip_top_down() {
        let d = DepthMap::new(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let bytes = encode_pfm(&d);
        // first stored row is the bottom row
        let header_len = b"Pf\n2 2\n-1.0\n".len();
        assert_eq!(&bytes[header_len..header_len + 4], &3.0f32.to_le_bytes());
        let back = decode_pfm(&bytes).unwrap();
        assert_eq!(back, d);
        assert_eq!(back.depth(1, 0), Some(2.0));
    }

    #[test]
    fn negative_and_nan_invalid() {
        let d = DepthMap::new(1, 3, vec![-1.0, f32::NAN, 0.5]).unwrap();
        assert!(!d.is_valid(0, 0));
        assert!(!d.is_valid(1, 0));
        assert!(d.is_valid(2, 0));
    }

    #[test]
    fn big_endian_accepted() {
        let mut bytes = b"Pf\n1 1\n1.0\n".to_vec();
        bytes.extend_from_slice(&2.5f32.to_be_bytes());
        assert_eq!(decode_pfm(&bytes).unwrap().raw(0, 0), 2.5);
    }

    #[test]
    fn malformed_headers() {
        assert!(matches!(
            decode_pfm(b"PF\n1 1\n-1.0\n\0\0\0\0"),
            Err(Error::BadMagic { .. })
        ));
        assert!(decode_pfm(b"Pf\n1\n-1.0\n\0\0\0\0").is_err());
        assert!(matches!(
            decode_pfm(b"Pf\n2 1\n-1.0\n\0\0\0\0"),
            Err(Error::Truncated { .. })
        ));
    }
}
