//! Bilinear backward warping.
//!
//! `out(x, y) = target(x + u(x, y), y + v(x, y))`. Samples outside
//! `[0, W-1] × [0, H-1]` are invalid and produce zero; no clamping.

use crate::error::{check_dims, Result};
use crate::frame::{BoolMap, Frame, Plane, CHANNELS};
use crate::media_io::FlowField;

/// Bilinear taps of one sample: four `(pixel index, weight)` pairs.
pub type Taps = [(usize, f64); 4];

fn axis_taps(s: f64, len: usize) -> Option<(usize, usize, f64)> {
    if !(s >= 0.0 && s <= (len - 1) as f64) {
        return None;
    }
    if len == 1 {
        return Some((0, 0, 0.0));
    }
    let i0 = (s.floor() as usize).min(len - 2);
    Some((i0, i0 + 1, s - i0 as f64))
}

/// Taps for sampling at `(sx, sy)` in a `width × height` image.
#[inline]
pub fn bilinear_taps(sx: f64, sy: f64, height: usize, width: usize) -> Option<Taps> {
    let (x0, x1, fx) = axis_taps(sx, width)?;
    let (y0, y1, fy) = axis_taps(sy, height)?;
    Some([
        (y0 * width + x0, (1.0 - fy) * (1.0 - fx)),
        (y0 * width + x1, (1.0 - fy) * fx),
        (y1 * width + x0, fy * (1.0 - fx)),
        (y1 * width + x1, fy * fx),
    ])
}

/// Per-pixel taps of a flow field (None where the sample leaves the image).
pub fn flow_taps(flow: &FlowField) -> Vec<Option<Taps>> {
    let (h, w) = flow.dims();
    let mut out = Vec::with_capacity(h * w);
    for y in 0..h {
        for x in 0..w {
            let (u, v) = flow.at(x, y);
            out.push(bilinear_taps(x as f64 + u, y as f64 + v, h, w));
        }
    }
    out
}

fn sample_interleaved(src: &[f64], channels: usize, taps: &Taps, out: &mut [f64]) {
    // at integer positions the weights are exactly 0/1, so values pass
    // through bit-for-bit
    for (c, o) in out.iter_mut().enumerate().take(channels) {
        *o = taps
            .iter()
            .map(|&(q, w)| w * src[q * channels + c])
            .sum::<f64>();
    }
}

fn warp_interleaved(
    src: &[f64],
    channels: usize,
    taps: &[Option<Taps>],
) -> (Vec<f64>, Vec<bool>) {
    let mut out = vec![0.0; src.len()];
    let mut valid = vec![false; taps.len()];
    for (p, t) in taps.iter().enumerate() {
        if let Some(t) = t {
            sample_interleaved(src, channels, t, &mut out[p * channels..(p + 1) * channels]);
            valid[p] = true;
        }
    }
    (out, valid)
}

/// Warps `target` back along `flow`; returns the warped frame and validity.
pub fn warp_backward(target: &Frame, flow: &FlowField) -> Result<(Frame, BoolMap)> {
    check_dims(target.dims(), flow.dims())?;
    let taps = flow_taps(flow);
    Ok(warp_frame_with_taps(target, &taps))
}

pub fn warp_frame_with_taps(target: &Frame, taps: &[Option<Taps>]) -> (Frame, BoolMap) {
    let (h, w) = target.dims();
    let (data, valid) = warp_interleaved(target.data(), CHANNELS, taps);
    (
        Frame::new(h, w, data).expect("warp preserves shape"),
        BoolMap::new(h, w, valid).expect("warp preserves shape"),
    )
}

/// Scalar-image variant, used for warping flow components.
pub fn warp_plane(target: &Plane, flow: &FlowField) -> Result<(Plane, BoolMap)> {
    check_dims(target.dims(), flow.dims())?;
    let (h, w) = target.dims();
    let taps = flow_taps(flow);
    let (data, valid) = warp_interleaved(target.data(), 1, &taps);
    Ok((
        Plane::new(h, w, data).expect("warp preserves shape"),
        BoolMap::new(h, w, valid).expect("warp preserves shape"),
    ))
}

/// Adjoint of the warp: distributes `grad_out` onto the sampled target
/// pixels with the bilinear weights. Accumulates into `grad_target`.
pub fn warp_adjoint_accumulate(grad_out: &[f64], taps: &[Option<Taps>], grad_target: &mut [f64]) {
    for (p, t) in taps.iter().enumerate() {
        let Some(t) = t else { continue };
        for c in 0..CHANNELS {
            let g = grad_out[p * CHANNELS + c];
            if g == 0.0 {
                continue;
            }
            for &(q, wgt) in t {
                grad_target[q * CHANNELS + c] += wgt * g;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::media_io::FlowDirection;

    fn ramp(h: usize, w: usize) -> Frame {
        Frame::from_fn(h, w, |x, y, c| ((x * 13 + y * 7 + c * 3) % 17) as f64 / 17.0)
    }

    #[test]
    fn zero_flow_is_identity() {
        let f = ramp(5, 6);
        let flow = FlowField::zeros(5, 6, FlowDirection::Forward, 0);
        let (out, valid) = warp_backward(&f, &flow).unwrap();
        assert_eq!(out, f);
        assert_eq!(valid.count(), 30);
    }

    #[test]
    fn integer_shift_recovers_interior() {
        // next(x) = curr(x - 1): content moved right by one pixel
        let curr = ramp(4, 6);
        let next = Frame::from_fn(4, 6, |x, y, c| if x == 0 { 0.0 } else { curr.get(x - 1, y, c) });
        let flow = FlowField::constant(4, 6, 1.0, 0.0, FlowDirection::Forward, 0).unwrap();
        let (out, valid) = warp_backward(&next, &flow).unwrap();
        for y in 0..4 {
            for x in 0..5 {
                assert!(valid.get(x, y));
                for c in 0..3 {
                    assert_eq!(out.get(x, y, c), curr.get(x, y, c));
                }
            }
            assert!(!valid.get(5, y));
            assert_eq!(out.get(5, y, 0), 0.0);
        }
    }

    #[test]
    fn outside_is_invalid() {
        let f = ramp(3, 3);
        let flow = FlowField::constant(3, 3, -0.5, 0.0, FlowDirection::Forward, 0).unwrap();
        let (_, valid) = warp_backward(&f, &flow).unwrap();
        for y in 0..3 {
            assert!(!valid.get(0, y));
            assert!(valid.get(1, y));
        }
    }

    #[test]
    fn half_pixel_average() {
        let f = Frame::from_fn(1, 2, |x, _, _| x as f64);
        let flow = FlowField::new(1, 2, vec![0.5, 0.0, 0.0, 0.0], FlowDirection::Forward, 0).unwrap();
        let (out, _) = warp_backward(&f, &flow).unwrap();
        assert_eq!(out.get(0, 0, 1), 0.5);
    }

    #[test]
    fn adjoint_identity() {
        // <W a, b> == <a, W^T b>
        let (h, w) = (6, 7);
        let data: Vec<f32> = (0..h * w)
            .flat_map(|i| {
                let s = (i as f32 * 0.37).sin();
                [1.3 * s, -0.9 * (i as f32 * 0.11).cos()]
            })
            .collect();
        let flow = FlowField::new(h, w, data, FlowDirection::Forward, 0).unwrap();
        let a = ramp(h, w);
        let b = Frame::from_fn(h, w, |x, y, c| ((x + 2 * y + c) % 5) as f64 - 2.0);
        let taps = flow_taps(&flow);
        let (wa, _) = warp_frame_with_taps(&a, &taps);
        let lhs: f64 = wa.data().iter().zip(b.data()).map(|(p, q)| p * q).sum();
        let mut wtb = vec![0.0; a.data().len()];
        warp_adjoint_accumulate(b.data(), &taps, &mut wtb);
        let rhs: f64 = a.data().iter().zip(&wtb).map(|(p, q)| p * q).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn mismatched_sizes() {
        let f = ramp(3, 3);
        let flow = FlowField::zeros(3, 4, FlowDirection::Forward, 0);
        assert!(warp_backward(&f, &flow).is_err());
    }
}
