//! Per-pixel index keys: propagated flow IDs, 7-bit quantized source colors
//! and optional world-space voxel coordinates.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_dims, Error, Result};
use crate::frame::{BoolMap, Frame, VideoVolume};
use crate::media_io::{CameraParams, DepthMap, FlowField};

/// Highest 7-bit code.
pub const QRGB_MAX: u8 = 127;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct IndexKey {
    pub flow_id: u64,
    pub qrgb: [u8; 3],
    /// `None` marks a pixel without valid depth; such pixels compare equal
    /// to each other on this component.
    pub voxel: Option<[i64; 3]>,
}

#[inline]
pub fn quantize_channel(c: f64) -> u8 {
    (c * 127.0 + 0.5).floor().clamp(0.0, QRGB_MAX as f64) as u8
}

/// `floor(c·127 + 0.5)` per channel, clamped to `[0, 127]`.
pub fn quantize_rgb(frame: &Frame) -> Vec<[u8; 3]> {
    (0..frame.pixels())
        .map(|p| {
            let c = frame.pixel(p);
            [quantize_channel(c[0]), quantize_channel(c[1]), quantize_channel(c[2])]
        })
        .collect()
}

/// Nearest-pixel forward target of `(x, y)`, if inside the image.
#[inline]
pub fn flow_target(flow: &FlowField, x: usize, y: usize) -> Option<usize> {
    let (h, w) = flow.dims();
    let (u, v) = flow.at(x, y);
    let tx = (x as f64 + u).round();
    let ty = (y as f64 + v).round();
    if tx < 0.0 || ty < 0.0 || tx >= w as f64 || ty >= h as f64 {
        return None;
    }
    Some(ty as usize * w + tx as usize)
}

/// Flow IDs for all `T × H × W` pixels, frame-major then row-major.
///
/// Frame 0 gets `0..HW`. A masked-in pixel of frame t hands its ID to the
/// nearest pixel its forward flow lands on in frame t+1; when several land
/// on one pixel the smallest ID wins. Pixels of t+1 nobody reached get
/// fresh IDs from a global counter in row-major order.
pub fn propagate_flow_ids(flows_fwd: &[FlowField], masks: &[BoolMap]) -> Result<Vec<u64>> {
    if flows_fwd.len() != masks.len() {
        return Err(Error::invalid(format!(
            "{} forward flows but {} masks",
            flows_fwd.len(),
            masks.len()
        )));
    }
    let Some(first) = flows_fwd.first() else {
        return Err(Error::TooFewFrames {
            required: 2,
            found: 1,
        });
    };
    let (h, w) = first.dims();
    let hw = h * w;
    for (f, m) in flows_fwd.iter().zip(masks) {
        check_dims((h, w), f.dims())?;
        check_dims((h, w), m.dims())?;
    }
    let frames = flows_fwd.len() + 1;
    let mut ids = Vec::with_capacity(frames * hw);
    ids.extend(0..hw as u64);
    let mut next_fresh = hw as u64;
    let inherited: Vec<AtomicU64> = (0..hw).map(|_| AtomicU64::new(u64::MAX)).collect();

    for (t, (flow, mask)) in flows_fwd.iter().zip(masks).enumerate() {
        inherited.iter().for_each(|a| a.store(u64::MAX, Ordering::Relaxed));
        let current = &ids[t * hw..(t + 1) * hw];
        (0..hw).into_par_iter().for_each(|p| {
            let (x, y) = (p % w, p / w);
            if !mask.get(x, y) {
                return;
            }
            if let Some(q) = flow_target(flow, x, y) {
                inherited[q].fetch_min(current[p], Ordering::Relaxed);
            }
        });
        for slot in &inherited {
            let id = slot.load(Ordering::Relaxed);
            if id == u64::MAX {
                ids.push(next_fresh);
                next_fresh += 1;
            } else {
                ids.push(id);
            }
        }
    }
    Ok(ids)
}

/// World-space voxel of every pixel with valid depth.
pub fn voxelize(depth: &DepthMap, cam: &CameraParams, voxel_size: f64) -> Result<Vec<Option<[i64; 3]>>> {
    if !(voxel_size > 0.0 && voxel_size.is_finite()) {
        return Err(Error::invalid(format!("voxel size must be positive, got {voxel_size}")));
    }
    let (h, w) = depth.dims();
    let mut out = Vec::with_capacity(h * w);
    for y in 0..h {
        for x in 0..w {
            out.push(depth.depth(x, y).map(|d| {
                let p = cam.unproject(x as f64, y as f64, d);
                p.map(|c| (c / voxel_size).floor() as i64)
            }));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KeyConfig {
    pub use_flow: bool,
    pub use_rgb: bool,
    /// Voxel edge length in meters; only used when depth is supplied.
    pub voxel_size: Option<f64>,
}

impl Default for KeyConfig {
    fn default() -> Self {
        KeyConfig {
            use_flow: true,
            use_rgb: true,
            voxel_size: Some(0.05),
        }
    }
}

/// Per-frame depth with matching cameras.
#[derive(Debug, Clone, Copy)]
pub struct DepthInput<'a> {
    pub depth: &'a [DepthMap],
    pub cameras: &'a [CameraParams],
}

/// Dense element index for every pixel plus the distinct keys.
#[derive(Debug, Clone, PartialEq)]
pub struct KeyVolume {
    frames: usize,
    height: usize,
    width: usize,
    /// Distinct keys in first-occurrence order; element `n` has key `unique[n]`.
    unique: Vec<IndexKey>,
    index_map: Vec<u32>,
    /// Pixel indices grouped by element (stable within a group).
    order: Vec<u32>,
    /// `order[offsets[n]..offsets[n+1]]` are the pixels of element `n`.
    offsets: Vec<usize>,
}

impl KeyVolume {
    /// Assigns dense indices to distinct keys in scan order.
    pub fn from_keys(frames: usize, height: usize, width: usize, keys: &[IndexKey]) -> Result<Self> {
        if keys.len() != frames * height * width {
            return Err(Error::invalid("key count does not match video size"));
        }
        let mut lookup: HashMap<IndexKey, u32> = HashMap::new();
        let mut unique = Vec::new();
        let mut index_map = Vec::with_capacity(keys.len());
        for k in keys {
            let n = *lookup.entry(*k).or_insert_with(|| {
                unique.push(*k);
                (unique.len() - 1) as u32
            });
            index_map.push(n);
        }
        if unique.len() > u32::MAX as usize {
            return Err(Error::invalid("too many distinct keys"));
        }
        Ok(Self::from_index_map_unchecked(frames, height, width, unique, index_map))
    }

    /// Builds from an explicit index map; every element in `0..n` must be
    /// used by at least one pixel.
    pub fn from_index_map(
        frames: usize,
        height: usize,
        width: usize,
        n: usize,
        index_map: Vec<u32>,
    ) -> Result<Self> {
        if index_map.len() != frames * height * width {
            return Err(Error::invalid("index map size does not match video size"));
        }
        let mut hit = vec![false; n];
        for &i in &index_map {
            let slot = hit
                .get_mut(i as usize)
                .ok_or_else(|| Error::invalid(format!("index {i} out of range for {n} elements")))?;
            *slot = true;
        }
        if hit.iter().any(|&h| !h) {
            return Err(Error::invalid("every element must be used by a pixel"));
        }
        let unique = (0..n as u64)
            .map(|flow_id| IndexKey {
                flow_id,
                qrgb: [0; 3],
                voxel: None,
            })
            .collect();
        Ok(Self::from_index_map_unchecked(frames, height, width, unique, index_map))
    }

    fn from_index_map_unchecked(
        frames: usize,
        height: usize,
        width: usize,
        unique: Vec<IndexKey>,
        index_map: Vec<u32>,
    ) -> Self {
        // counting sort by element keeps pixel order inside each group
        let n = unique.len();
        let mut offsets = vec![0usize; n + 1];
        for &i in &index_map {
            offsets[i as usize + 1] += 1;
        }
        for i in 0..n {
            offsets[i + 1] += offsets[i];
        }
        let mut cursor = offsets.clone();
        let mut order = vec![0u32; index_map.len()];
        for (p, &i) in index_map.iter().enumerate() {
            order[cursor[i as usize]] = p as u32;
            cursor[i as usize] += 1;
        }
        KeyVolume {
            frames,
            height,
            width,
            unique,
            index_map,
            order,
            offsets,
        }
    }

    pub fn len(&self) -> usize {
        self.unique.len()
    }

    pub fn is_empty(&self) -> bool {
        self.unique.is_empty()
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn pixel_count(&self) -> usize {
        self.index_map.len()
    }

    pub fn index_map(&self) -> &[u32] {
        &self.index_map
    }

    /// Element indices of the pixels of frame `t`.
    pub fn frame_indices(&self, t: usize) -> &[u32] {
        let hw = self.height * self.width;
        &self.index_map[t * hw..(t + 1) * hw]
    }

    pub fn keys(&self) -> &[IndexKey] {
        &self.unique
    }

    /// Pixels (global indices) belonging to element `n`.
    pub fn members(&self, n: usize) -> &[u32] {
        &self.order[self.offsets[n]..self.offsets[n + 1]]
    }

    /// `N / (T·H·W)` as a percentage.
    pub fn compression_rate(&self) -> f64 {
        100.0 * self.len() as f64 / self.pixel_count() as f64
    }
}

/// Builds `κ = (flow ID, quantized source color, voxel)` for every pixel.
/// `masks` are the binarized reliability masks of the T-1 forward links.
pub fn build_keys(
    source: &VideoVolume,
    flows_fwd: &[FlowField],
    masks: &[BoolMap],
    depth: Option<DepthInput<'_>>,
    cfg: &KeyConfig,
) -> Result<KeyVolume> {
    source.require_optimizable()?;
    let (h, w) = source.dims();
    let frames = source.len();
    if flows_fwd.len() != frames - 1 {
        return Err(Error::invalid(format!(
            "need {} forward flows, got {}",
            frames - 1,
            flows_fwd.len()
        )));
    }
    let flow_ids = if cfg.use_flow {
        propagate_flow_ids(flows_fwd, masks)?
    } else {
        vec![0; frames * h * w]
    };
    let qrgb: Vec<[u8; 3]> = if cfg.use_rgb {
        source.frames().par_iter().flat_map_iter(quantize_rgb).collect()
    } else {
        vec![[0; 3]; frames * h * w]
    };
    let voxels: Vec<Option<[i64; 3]>> = match (depth, cfg.voxel_size) {
        (Some(d), Some(size)) => {
            if d.depth.len() != frames || d.cameras.len() != frames {
                return Err(Error::invalid(format!(
                    "need {frames} depth maps and cameras, got {} and {}",
                    d.depth.len(),
                    d.cameras.len()
                )));
            }
            for dm in d.depth {
                check_dims((h, w), dm.dims())?;
            }
            let per_frame = d
                .depth
                .par_iter()
                .zip(d.cameras)
                .map(|(dm, cam)| voxelize(dm, cam, size))
                .collect::<Result<Vec<_>>>()?;
            per_frame.concat()
        }
        _ => vec![None; frames * h * w],
    };
    let keys: Vec<IndexKey> = (0..frames * h * w)
        .map(|i| IndexKey {
            flow_id: flow_ids[i],
            qrgb: qrgb[i],
            voxel: voxels[i],
        })
        .collect();
    KeyVolume::from_keys(frames, h, w, &keys)
}
