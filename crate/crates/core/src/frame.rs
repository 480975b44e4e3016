//! In-memory image containers.
//!
//! Colors are stored as `f64`, interleaved RGB, row-major. Scalar maps
//! (masks, error maps) use [`Plane`]; boolean maps use [`BoolMap`].

use crate::error::{check_dims, Error, Result};

pub const CHANNELS: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl Frame {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::invalid("frame dimensions must be positive"));
        }
        if data.len() != height * width * CHANNELS {
            return Err(Error::invalid(format!(
                "frame data has {} values, expected {}",
                data.len(),
                height * width * CHANNELS
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("frame contains non-finite values"));
        }
        Ok(Frame {
            height,
            width,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Self {
        Frame {
            height,
            width,
            data: vec![value; height * width * CHANNELS],
        }
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(height * width * CHANNELS);
        for y in 0..height {
            for x in 0..width {
                for c in 0..CHANNELS {
                    data.push(f(x, y, c));
                }
            }
        }
        Frame {
            height,
            width,
            data,
        }
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
    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    #[inline]
    pub fn pixels(&self) -> usize {
        self.height * self.width
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * CHANNELS + c]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: usize, v: f64) {
        self.data[(y * self.width + x) * CHANNELS + c] = v;
    }

    #[inline]
    pub fn pixel(&self, index: usize) -> [f64; 3] {
        let o = index * CHANNELS;
        [self.data[o], self.data[o + 1], self.data[o + 2]]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn clamped(&self) -> Frame {
        Frame {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|v| v.clamp(0.0, 1.0)).collect(),
        }
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    /// Single channel copy as a scalar plane.
    pub fn channel(&self, c: usize) -> Plane {
        Plane {
            height: self.height,
            width: self.width,
            data: self.data.iter().skip(c).step_by(CHANNELS).copied().collect(),
        }
    }
}

/// H×W scalar map.
#[derive(Debug, Clone, PartialEq)]
pub struct Plane {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl Plane {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::invalid(format!(
                "plane data has {} values, expected {}",
                data.len(),
                height * width
            )));
        }
        Ok(Plane {
            height,
            width,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Self {
        Plane {
            height,
            width,
            data: vec![value; height * width],
        }
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
    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        self.data[y * self.width + x] = v;
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }
}

/// H×W boolean map (warp validity, binarized masks).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BoolMap {
    height: usize,
    width: usize,
    data: Vec<bool>,
}

impl BoolMap {
    pub fn new(height: usize, width: usize, data: Vec<bool>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::invalid("bool map size mismatch"));
        }
        Ok(BoolMap {
            height,
            width,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, value: bool) -> Self {
        BoolMap {
            height,
            width,
            data: vec![value; height * width],
        }
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x]
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }
}

/// Ordered frames of uniform resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoVolume {
    frames: Vec<Frame>,
}

impl VideoVolume {
    pub fn new(frames: Vec<Frame>) -> Result<Self> {
        let first = frames
            .first()
            .ok_or(Error::TooFewFrames {
                required: 1,
                found: 0,
            })?
            .dims();
        for f in &frames[1..] {
            check_dims(first, f.dims())?;
        }
        Ok(VideoVolume { frames })
    }

    /// Fails unless the video has at least two frames.
    pub fn require_optimizable(&self) -> Result<()> {
        if self.frames.len() < 2 {
            return Err(Error::TooFewFrames {
                required: 2,
                found: self.frames.len(),
            });
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn dims(&self) -> (usize, usize) {
        self.frames[0].dims()
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    pub fn frame(&self, t: usize) -> &Frame {
        &self.frames[t]
    }

    pub fn into_frames(self) -> Vec<Frame> {
        self.frames
    }

    pub fn pixel_count(&self) -> usize {
        let (h, w) = self.dims();
        self.frames.len() * h * w
    }

    pub fn map_frames(&self, f: impl Fn(&Frame) -> Frame) -> VideoVolume {
        VideoVolume {
            frames: self.frames.iter().map(f).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_mixed_resolutions() {
        let a = Frame::filled(4, 4, 0.0);
        let b = Frame::filled(4, 5, 0.0);
        assert!(matches!(
            VideoVolume::new(vec![a, b]),
            Err(Error::ResolutionMismatch { .. })
        ));
    }

    #[test]
    fn channel_extraction() {
        let f = Frame::from_fn(2, 3, |x, y, c| (x + 10 * y + 100 * c) as f64);
        let g = f.channel(2);
        assert_eq!(g.get(2, 1), 212.0);
        assert_eq!(f.pixel(4), [11.0, 111.0, 211.0]);
    }

    #[test]
    fn nonfinite_rejected() {
        assert!(Frame::new(1, 1, vec![0.0, f64::NAN, 0.0]).is_err());
    }
}
