//! Loading and saving of frames, flows, depth, cameras and tensors.

mod camera;
mod depth;
mod flo;
mod frames;
mod tensor;

use std::path::Path;

pub use camera::{format_cameras, load_cameras, parse_cameras, CameraParams};
pub use depth::{decode_pfm, encode_pfm, load_depth_pfm, load_depth_png, save_depth_pfm, DepthMap};
pub use flo::{decode_flo, encode_flo, load_flo, write_flo, FlowDirection, FlowField, FLO_TAG};
pub use frames::{
    list_frames, load_frame, load_frame_sequence, quantize_16bit, save_frame_png16,
    save_frame_png8, save_frame_sequence,
};
pub use tensor::{decode_tensor4, encode_tensor4, load_tensor4, save_tensor4, Tensor4, TENSOR_MAGIC};

use crate::error::{check_dims, Error, Result};

/// Forward and backward flows for a T-frame video.
///
/// `forward[t]` maps frame t to t+1 (t = 0..T-2); `backward[t]` maps frame
/// t+1 to t (it is the backward flow anchored at frame t+1).
#[derive(Debug, Clone, PartialEq)]
pub struct FlowSet {
    forward: Vec<FlowField>,
    backward: Vec<FlowField>,
}

impl FlowSet {
    pub fn new(forward: Vec<FlowField>, backward: Vec<FlowField>) -> Result<Self> {
        if forward.is_empty() || forward.len() != backward.len() {
            return Err(Error::invalid(format!(
                "need equal, non-zero forward/backward flow counts (got {} and {})",
                forward.len(),
                backward.len()
            )));
        }
        let dims = forward[0].dims();
        for (t, f) in forward.iter().enumerate() {
            check_dims(dims, f.dims())?;
            if f.direction != FlowDirection::Forward || f.frame != t {
                return Err(Error::invalid(format!("forward flow {t} mislabelled")));
            }
        }
        for (i, f) in backward.iter().enumerate() {
            check_dims(dims, f.dims())?;
            if f.direction != FlowDirection::Backward || f.frame != i + 1 {
                return Err(Error::invalid(format!("backward flow {} mislabelled", i + 1)));
            }
        }
        Ok(FlowSet { forward, backward })
    }

    /// Zero flows for a static `frames`-long video.
    pub fn zeros(frames: usize, height: usize, width: usize) -> Self {
        FlowSet {
            forward: (0..frames - 1)
                .map(|t| FlowField::zeros(height, width, FlowDirection::Forward, t))
                .collect(),
            backward: (1..frames)
                .map(|t| FlowField::zeros(height, width, FlowDirection::Backward, t))
                .collect(),
        }
    }

    /// Spatially constant translation `(du, dv)` per frame step.
    pub fn translation(frames: usize, height: usize, width: usize, du: f32, dv: f32) -> Result<Self> {
        let forward = (0..frames - 1)
            .map(|t| FlowField::constant(height, width, du, dv, FlowDirection::Forward, t))
            .collect::<Result<_>>()?;
        let backward = (1..frames)
            .map(|t| FlowField::constant(height, width, -du, -dv, FlowDirection::Backward, t))
            .collect::<Result<_>>()?;
        Self::new(forward, backward)
    }

    /// Number of video frames covered.
    pub fn frames(&self) -> usize {
        self.forward.len() + 1
    }

    pub fn dims(&self) -> (usize, usize) {
        self.forward[0].dims()
    }

    /// Flow t -> t+1.
    pub fn forward(&self, t: usize) -> &FlowField {
        &self.forward[t]
    }

    /// Flow t -> t-1, for t >= 1.
    pub fn backward(&self, t: usize) -> &FlowField {
        &self.backward[t - 1]
    }

    pub fn forward_all(&self) -> &[FlowField] {
        &self.forward
    }

    /// Checks the flows fit a video of `frames` frames at `dims`.
    pub fn check_video(&self, frames: usize, dims: (usize, usize)) -> Result<()> {
        check_dims(dims, self.dims())?;
        if self.frames() != frames {
            return Err(Error::invalid(format!(
                "flows cover {} frames, video has {frames}",
                self.frames()
            )));
        }
        Ok(())
    }
}

pub fn flow_file_name(t: usize) -> String {
    format!("{t:06}.flo")
}

/// Loads `fwd_dir/{t:06}.flo` for t in 0..T-1 and `bwd_dir/{t:06}.flo` for
/// t in 1..T.
pub fn load_flow_set(fwd_dir: &Path, bwd_dir: &Path, frames: usize) -> Result<FlowSet> {
    if frames < 2 {
        return Err(Error::TooFewFrames {
            required: 2,
            found: frames,
        });
    }
    let mut forward = Vec::with_capacity(frames - 1);
    let mut backward = Vec::with_capacity(frames - 1);
    for t in 0..frames - 1 {
        let path = fwd_dir.join(flow_file_name(t));
        if !path.is_file() {
            return Err(Error::MissingFlow {
                from: t,
                to: t + 1,
                path,
            });
        }
        forward.push(load_flo(&path, FlowDirection::Forward, t)?);
    }
    for t in 1..frames {
        let path = bwd_dir.join(flow_file_name(t));
        if !path.is_file() {
            return Err(Error::MissingFlow {
                from: t,
                to: t - 1,
                path,
            });
        }
        backward.push(load_flo(&path, FlowDirection::Backward, t)?);
    }
    FlowSet::new(forward, backward)
}

pub fn save_flow_set(fwd_dir: &Path, bwd_dir: &Path, flows: &FlowSet) -> Result<()> {
    for dir in [fwd_dir, bwd_dir] {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    for f in &flows.forward {
        write_flo(fwd_dir.join(flow_file_name(f.frame)), f)?;
    }
    for f in &flows.backward {
        write_flo(bwd_dir.join(flow_file_name(f.frame)), f)?;
    }
    Ok(())
}

/// Per-frame depth from `dir/{t:06}.pfm` or `dir/{t:06}.png` (millimeters).
pub fn load_depth_sequence(dir: &Path, frames: usize) -> Result<Vec<DepthMap>> {
    (0..frames)
        .map(|t| {
            let pfm = dir.join(format!("{t:06}.pfm"));
            if pfm.is_file() {
                return load_depth_pfm(&pfm);
            }
            let png = dir.join(format!("{t:06}.png"));
            if png.is_file() {
                return load_depth_png(&png);
            }
            Err(Error::io(
                pfm,
                std::io::Error::new(std::io::ErrorKind::NotFound, "depth map not found"),
            ))
        })
        .collect()
}
