//! Middlebury `.flo` optical flow files.
//!
//! Layout: f32 tag 202021.25, i32 width, i32 height, then `width*height`
//! interleaved `(u, v)` f32 pairs, row-major. Everything little-endian.

use std::path::Path;

use crate::error::{Error, Result};
use crate::frame::Plane;

pub const FLO_TAG: f32 = 202021.25;
const HEADER_LEN: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FlowDirection {
    /// t -> t+1
    Forward,
    /// t -> t-1
    Backward,
}

/// Per-pixel displacement in pixels. `frame` is the index of the frame the
/// flow is anchored at.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    height: usize,
    width: usize,
    data: Vec<f32>,
    pub direction: FlowDirection,
    pub frame: usize,
}

impl FlowField {
    pub fn new(
        height: usize,
        width: usize,
        data: Vec<f32>,
        direction: FlowDirection,
        frame: usize,
    ) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::invalid("flow dimensions must be positive"));
        }
        if data.len() != height * width * 2 {
            return Err(Error::invalid(format!(
                "flow data has {} values, expected {}",
                data.len(),
                height * width * 2
            )));
        }
        for pair in data.chunks_exact(2) {
            let (u, v) = (pair[0], pair[1]);
            if !u.is_finite() || !v.is_finite() {
                return Err(Error::invalid("flow contains non-finite values"));
            }
            if u.abs() >= width as f32 || v.abs() >= height as f32 {
                return Err(Error::invalid(format!(
                    "flow ({u}, {v}) exceeds image extent {width}x{height}"
                )));
            }
        }
        Ok(FlowField {
            height,
            width,
            data,
            direction,
            frame,
        })
    }

    /// Spatially uniform flow.
    pub fn constant(
        height: usize,
        width: usize,
        u: f32,
        v: f32,
        direction: FlowDirection,
        frame: usize,
    ) -> Result<Self> {
        let data = (0..height * width).flat_map(|_| [u, v]).collect();
        Self::new(height, width, data, direction, frame)
    }

    pub fn zeros(height: usize, width: usize, direction: FlowDirection, frame: usize) -> Self {
        FlowField {
            height,
            width,
            data: vec![0.0; height * width * 2],
            direction,
            frame,
        }
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> (f64, f64) {
        let o = (y * self.width + x) * 2;
        (self.data[o] as f64, self.data[o + 1] as f64)
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    /// Splits into `(u, v)` scalar planes.
    pub fn components(&self) -> (Plane, Plane) {
        let u = self.data.iter().step_by(2).map(|&v| v as f64).collect();
        let v = self.data.iter().skip(1).step_by(2).map(|&v| v as f64).collect();
        (
            Plane::new(self.height, self.width, u).expect("sized"),
            Plane::new(self.height, self.width, v).expect("sized"),
        )
    }
}

pub fn decode_flo(bytes: &[u8], direction: FlowDirection, frame: usize) -> Result<FlowField> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Truncated {
            what: "flo header",
            expected: HEADER_LEN,
            found: bytes.len(),
        });
    }
    let tag = f32::from_le_bytes(bytes[0..4].try_into().unwrap());
    if tag != FLO_TAG {
        return Err(Error::BadMagic {
            what: "flo",
            found: format!("{tag}"),
        });
    }
    let width = i32::from_le_bytes(bytes[4..8].try_into().unwrap());
    let height = i32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if width <= 0 || height <= 0 {
        return Err(Error::Malformed {
            what: "flo",
            message: format!("non-positive dimensions {width}x{height}"),
        });
    }
    let (width, height) = (width as usize, height as usize);
    let expected = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(8))
        .and_then(|n| n.checked_add(HEADER_LEN))
        .ok_or(Error::Malformed {
            what: "flo",
            message: "dimension overflow".into(),
        })?;
    if bytes.len() < expected {
        return Err(Error::Truncated {
            what: "flo payload",
            expected,
            found: bytes.len(),
        });
    }
    if bytes.len() > expected {
        return Err(Error::Malformed {
            what: "flo",
            message: format!("{} trailing bytes", bytes.len() - expected),
        });
    }
    let data = bytes[HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    FlowField::new(height, width, data, direction, frame)
}

pub fn encode_flo(flow: &FlowField) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + flow.data.len() * 4);
    out.extend_from_slice(&FLO_TAG.to_le_bytes());
    out.extend_from_slice(&(flow.width as i32).to_le_bytes());
    out.extend_from_slice(&(flow.height as i32).to_le_bytes());
    for v in &flow.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn load_flo(path: impl AsRef<Path>, direction: FlowDirection, frame: usize) -> Result<FlowField> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_flo(&bytes, direction, frame)
}

pub fn write_flo(path: impl AsRef<Path>, flow: &FlowField) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_flo(flow)).map_err(|e| Error::io(path, e))
}
