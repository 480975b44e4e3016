use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{check_dims, Error, Result};
use crate::frame::{Frame, VideoVolume, CHANNELS};

use super::keys::KeyVolume;

/// `N × 3` canonical colors indexed by a [`KeyVolume`].
#[derive(Debug, Clone, PartialEq)]
pub struct UniqueVideoTensor {
    values: Vec<f64>,
    keys: Arc<KeyVolume>,
}

impl UniqueVideoTensor {
    pub fn new(values: Vec<f64>, keys: Arc<KeyVolume>) -> Result<Self> {
        if values.len() != keys.len() * CHANNELS {
            return Err(Error::invalid(format!(
                "{} values for {} elements",
                values.len(),
                keys.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("UVT values must be finite"));
        }
        Ok(UniqueVideoTensor { values, keys })
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn keys(&self) -> &Arc<KeyVolume> {
        &self.keys
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn element(&self, n: usize) -> [f64; 3] {
        let o = n * CHANNELS;
        [self.values[o], self.values[o + 1], self.values[o + 2]]
    }

    /// Frame `t` of the scattered video.
    pub fn scatter_frame(&self, t: usize) -> Frame {
        let (h, w) = self.keys.dims();
        let mut data = Vec::with_capacity(h * w * CHANNELS);
        for &n in self.keys.frame_indices(t) {
            data.extend_from_slice(&self.element(n as usize));
        }
        Frame::new(h, w, data).expect("finite values")
    }
}

/// Element-wise mean of member pixel colors. Members are summed in pixel
/// scan order, so the result is independent of thread count.
pub fn gather(video: &VideoVolume, keys: Arc<KeyVolume>) -> Result<UniqueVideoTensor> {
    check_dims(keys.dims(), video.dims())?;
    if video.len() != keys.frames() {
        return Err(Error::invalid(format!(
            "video has {} frames, keys cover {}",
            video.len(),
            keys.frames()
        )));
    }
    let hw = video.dims().0 * video.dims().1;
    let values: Vec<f64> = (0..keys.len())
        .into_par_iter()
        .flat_map_iter(|n| {
            let members = keys.members(n);
            let mut acc = [0.0; 3];
            for &p in members {
                let p = p as usize;
                let c = video.frame(p / hw).pixel(p % hw);
                for (a, v) in acc.iter_mut().zip(c) {
                    *a += v;
                }
            }
            let k = members.len() as f64;
            acc.map(|a| a / k)
        })
        .collect();
    UniqueVideoTensor::new(values, keys)
}

/// Every pixel takes its element's color.
pub fn scatter(uvt: &UniqueVideoTensor) -> VideoVolume {
    let frames = (0..uvt.keys.frames())
        .into_par_iter()
        .map(|t| uvt.scatter_frame(t))
        .collect();
    VideoVolume::new(frames).expect("uniform frames")
}

/// Adds per-pixel gradients of frame `t` into the element gradient.
pub fn scatter_grad_accumulate(keys: &KeyVolume, t: usize, pixel_grad: &[f64], grad_u: &mut [f64]) {
    for (p, &n) in keys.frame_indices(t).iter().enumerate() {
        let o = n as usize * CHANNELS;
        for c in 0..CHANNELS {
            grad_u[o + c] += pixel_grad[p * CHANNELS + c];
        }
    }
}
