//! Reliability masks from forward/backward flow consistency and photometric
//! error.
//!
//! Error-map pixels whose warp sample leaves the image hold `+∞`; they are
//! excluded from threshold statistics and always receive mask weight 0.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_dims, Error, Result};
use crate::frame::{BoolMap, Frame, Plane, VideoVolume};
use crate::media_io::{FlowField, FlowSet};
use crate::warp::{warp_backward, warp_plane};

/// Sentinel for pixels without a valid warp sample.
pub const INVALID_ERROR: f64 = f64::INFINITY;

/// Per-pixel weights in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftMask(Plane);

impl SoftMask {
    pub fn new(plane: Plane) -> Result<Self> {
        if plane.data().iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::invalid("soft mask values must lie in [0, 1]"));
        }
        Ok(SoftMask(plane))
    }

    pub fn full(height: usize, width: usize) -> Self {
        SoftMask(Plane::filled(height, width, 1.0))
    }

    pub fn plane(&self) -> &Plane {
        &self.0
    }

    pub fn dims(&self) -> (usize, usize) {
        self.0.dims()
    }

    pub fn data(&self) -> &[f64] {
        self.0.data()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FlowErrorDirection {
    /// `|F_bwd,t + Warp(F_fwd,t-1)|`, the link into frame t.
    #[default]
    AsWritten,
    /// `|F_fwd,t + Warp(F_bwd,t+1)|`, the link out of frame t.
    Forward,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskConfig {
    pub beta: f64,
    /// Explicit thresholds override the statistic rule.
    pub xi_flow: Option<f64>,
    pub xi_rgb: Option<f64>,
    /// Statistic rule: `xi = max(mean + k·std, floor)`.
    pub xi_std_factor: f64,
    pub xi_flow_floor: f64,
    pub xi_rgb_floor: f64,
    pub flow_error_direction: FlowErrorDirection,
}

impl Default for MaskConfig {
    fn default() -> Self {
        MaskConfig {
            beta: 50.0,
            xi_flow: None,
            xi_rgb: None,
            xi_std_factor: 1.0,
            xi_flow_floor: 0.5,
            xi_rgb_floor: 0.1,
            flow_error_direction: FlowErrorDirection::AsWritten,
        }
    }
}

impl MaskConfig {
    pub fn explicit(beta: f64, xi_flow: f64, xi_rgb: f64) -> Self {
        MaskConfig {
            beta,
            xi_flow: Some(xi_flow),
            xi_rgb: Some(xi_rgb),
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::Config(format!("mask beta must be positive, got {}", self.beta)));
        }
        if !(self.xi_std_factor.is_finite() && self.xi_flow_floor >= 0.0 && self.xi_rgb_floor >= 0.0) {
            return Err(Error::Config("mask threshold rule parameters invalid".into()));
        }
        Ok(())
    }
}

/// `|flow + Warp_flow(other)|` per pixel, where `other` is sampled along
/// `flow` channelwise.
pub fn flow_error_map(flow: &FlowField, other: &FlowField) -> Result<Plane> {
    check_dims(flow.dims(), other.dims())?;
    let (h, w) = flow.dims();
    let (ou, ov) = other.components();
    let (wu, valid) = warp_plane(&ou, flow)?;
    let (wv, _) = warp_plane(&ov, flow)?;
    let mut out = Plane::filled(h, w, INVALID_ERROR);
    for y in 0..h {
        for x in 0..w {
            if !valid.get(x, y) {
                continue;
            }
            let (u, v) = flow.at(x, y);
            let du = u + wu.get(x, y);
            let dv = v + wv.get(x, y);
            out.set(x, y, (du * du + dv * dv).sqrt());
        }
    }
    Ok(out)
}

/// Mean over channels of `|curr - Warp(next)|` with `next` sampled along the
/// forward flow of `curr`.
pub fn rgb_error_map(curr: &Frame, next: &Frame, fwd: &FlowField) -> Result<Plane> {
    check_dims(curr.dims(), next.dims())?;
    let (warped, valid) = warp_backward(next, fwd)?;
    let (h, w) = curr.dims();
    let mut out = Plane::filled(h, w, INVALID_ERROR);
    for y in 0..h {
        for x in 0..w {
            if !valid.get(x, y) {
                continue;
            }
            let e = (0..3)
                .map(|c| (curr.get(x, y, c) - warped.get(x, y, c)).abs())
                .sum::<f64>()
                / 3.0;
            out.set(x, y, e);
        }
    }
    Ok(out)
}

/// `mean + k·std` over the finite entries, in scan order. `None` if there
/// are no finite entries.
pub fn error_statistic(map: &Plane, k: f64) -> Option<f64> {
    let mut n = 0usize;
    let mut sum = 0.0;
    for &v in map.data() {
        if v.is_finite() {
            n += 1;
            sum += v;
        }
    }
    if n == 0 {
        return None;
    }
    let mean = sum / n as f64;
    let var = map
        .data()
        .iter()
        .filter(|v| v.is_finite())
        .map(|v| (v - mean) * (v - mean))
        .sum::<f64>()
        / n as f64;
    Some(mean + k * var.sqrt())
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn threshold(explicit: Option<f64>, map: &Plane, k: f64, floor: f64) -> f64 {
    match explicit {
        Some(xi) => xi,
        None => error_statistic(map, k).map_or(floor, |s| s.max(floor)),
    }
}

/// `sigmoid(β(ξ_flow - E_flow)) · sigmoid(β(ξ_rgb - E_rgb))`.
pub fn soft_mask(e_flow: &Plane, e_rgb: &Plane, cfg: &MaskConfig) -> Result<SoftMask> {
    check_dims(e_flow.dims(), e_rgb.dims())?;
    cfg.validate()?;
    let xi_flow = threshold(cfg.xi_flow, e_flow, cfg.xi_std_factor, cfg.xi_flow_floor);
    let xi_rgb = threshold(cfg.xi_rgb, e_rgb, cfg.xi_std_factor, cfg.xi_rgb_floor);
    let (h, w) = e_flow.dims();
    let data = e_flow
        .data()
        .iter()
        .zip(e_rgb.data())
        .map(|(&ef, &er)| {
            if !ef.is_finite() || !er.is_finite() {
                0.0
            } else {
                sigmoid(cfg.beta * (xi_flow - ef)) * sigmoid(cfg.beta * (xi_rgb - er))
            }
        })
        .collect();
    SoftMask::new(Plane::new(h, w, data)?)
}

/// Strict `> 0.5`.
pub fn binarize_mask(m: &SoftMask) -> BoolMap {
    let (h, w) = m.dims();
    BoolMap::new(h, w, m.data().iter().map(|&v| v > 0.5).collect()).expect("same shape")
}

/// Flow error map for the link at frame `t` (0 ≤ t ≤ T-2).
pub fn flow_error_for_frame(flows: &FlowSet, t: usize, dir: FlowErrorDirection) -> Result<Plane> {
    match dir {
        FlowErrorDirection::AsWritten if t >= 1 => {
            flow_error_map(flows.backward(t), flows.forward(t - 1))
        }
        // frame 0 has no incoming link; check the outgoing one instead
        _ => flow_error_map(flows.forward(t), flows.backward(t + 1)),
    }
}

/// Soft masks `M_t` for t = 0..T-2 from the source video and its flows.
pub fn compute_masks(source: &VideoVolume, flows: &FlowSet, cfg: &MaskConfig) -> Result<Vec<SoftMask>> {
    source.require_optimizable()?;
    flows.check_video(source.len(), source.dims())?;
    cfg.validate()?;
    (0..source.len() - 1)
        .into_par_iter()
        .map(|t| {
            let e_flow = flow_error_for_frame(flows, t, cfg.flow_error_direction)?;
            let e_rgb = rgb_error_map(source.frame(t), source.frame(t + 1), flows.forward(t))?;
            soft_mask(&e_flow, &e_rgb, cfg)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::media_io::FlowDirection;

    #[test]
    fn exact_inverse_flows_have_zero_error() {
        let d = 1.5f32;
        let fwd = FlowField::constant(6, 8, d, 0.0, FlowDirection::Forward, 0).unwrap();
        let bwd = FlowField::constant(6, 8, -d, 0.0, FlowDirection::Backward, 1).unwrap();
        let e = flow_error_map(&bwd, &fwd).unwrap();
        for y in 0..6 {
            for x in 2..8 {
                assert_eq!(e.get(x, y), 0.0);
            }
            assert_eq!(e.get(0, y), INVALID_ERROR);
        }
    }

    #[test]
    fn same_direction_flows_add() {
        let a = FlowField::constant(5, 5, 1.0, 1.0, FlowDirection::Backward, 1).unwrap();
        let b = FlowField::constant(5, 5, 1.0, 1.0, FlowDirection::Forward, 0).unwrap();
        let e = flow_error_map(&a, &b).unwrap();
        assert!((e.get(1, 1) - 2.0 * 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(e.get(4, 4), INVALID_ERROR);
    }

    #[test]
    fn rgb_error_trivial_cases() {
        let f = Frame::from_fn(4, 4, |x, y, c| (x + y + c) as f64 / 10.0);
        let zero = FlowField::zeros(4, 4, FlowDirection::Forward, 0);
        let e = rgb_error_map(&f, &f, &zero).unwrap();
        assert!(e.data().iter().all(|&v| v == 0.0));
        let e = rgb_error_map(&Frame::filled(4, 4, 0.0), &Frame::filled(4, 4, 1.0), &zero).unwrap();
        assert!(e.data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn mask_at_thresholds_is_quarter() {
        let ef = Plane::filled(2, 2, 0.7);
        let er = Plane::filled(2, 2, 0.03);
        let m = soft_mask(&ef, &er, &MaskConfig::explicit(50.0, 0.7, 0.03)).unwrap();
        assert!(m.data().iter().all(|&v| v == 0.25));
        assert!(binarize_mask(&m).data().iter().all(|&b| !b));
    }

    #[test]
    fn saturation() {
        let ef = Plane::filled(2, 2, 0.0);
        let er = Plane::filled(2, 2, 0.0);
        let m = soft_mask(&ef, &er, &MaskConfig::explicit(50.0, 1.0, 1.0)).unwrap();
        assert!(m.data().iter().all(|&v| (1.0 - v).abs() < 1e-9));
    }

    #[test]
    fn sentinel_masked() {
        let mut ef = Plane::filled(1, 2, 0.0);
        ef.set(1, 0, INVALID_ERROR);
        let er = Plane::filled(1, 2, 0.0);
        let m = soft_mask(&ef, &er, &MaskConfig::default()).unwrap();
        assert_eq!(m.data()[1], 0.0);
        assert!(m.data()[0] > 0.9);
    }

    #[test]
    fn binarize_is_strict() {
        let m = SoftMask::new(Plane::new(1, 3, vec![0.5, 0.500001, 0.0]).unwrap()).unwrap();
        assert_eq!(binarize_mask(&m).data(), &[false, true, false]);
    }

    #[test]
    fn statistic_ignores_sentinels() {
        let p = Plane::new(1, 4, vec![1.0, 3.0, INVALID_ERROR, 2.0]).unwrap();
        let s = error_statistic(&p, 1.0).unwrap();
        assert!((s - (2.0 + (2.0f64 / 3.0).sqrt())).abs() < 1e-12);
        assert_eq!(error_statistic(&Plane::filled(1, 1, INVALID_ERROR), 1.0), None);
    }

    #[test]
    fn consistent_static_source_is_reliable() {
        let frames = vec![Frame::filled(8, 8, 0.4); 3];
        let video = VideoVolume::new(frames).unwrap();
        let flows = FlowSet::zeros(3, 8, 8);
        let masks = compute_masks(&video, &flows, &MaskConfig::default()).unwrap();
        assert_eq!(masks.len(), 2);
        for m in &masks {
            assert!(binarize_mask(m).data().iter().all(|&b| b));
        }
    }

    #[test]
    fn bad_beta_rejected() {
        let p = Plane::filled(1, 1, 0.0);
        let cfg = MaskConfig {
            beta: 0.0,
            ..Default::default()
        };
        assert!(soft_mask(&p, &p, &cfg).is_err());
    }
}
