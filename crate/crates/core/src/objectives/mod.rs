//! Differentiable image losses with analytic gradients, and Adam.

mod adam;
pub mod ssim;

pub use adam::{lr_schedule, AdamConfig, AdamState};
pub use ssim::{ssim_loss, ssim_map};

use crate::error::{check_dims, Error, Result};
use crate::frame::{Frame, CHANNELS};
use crate::mask::SoftMask;

/// Loss value and its gradient with respect to the first argument.
/// `grad` uses the argument's interleaved layout.
#[derive(Debug, Clone, PartialEq)]
pub struct LossValue {
    pub value: f64,
    pub grad: Vec<f64>,
}

impl LossValue {
    pub fn zero(len: usize) -> Self {
        LossValue {
            value: 0.0,
            grad: vec![0.0; len],
        }
    }

    pub fn scaled(mut self, s: f64) -> Self {
        self.value *= s;
        self.grad.iter_mut().for_each(|g| *g *= s);
        self
    }

    pub fn add_scaled(&mut self, other: &LossValue, s: f64) {
        self.value += s * other.value;
        for (g, o) in self.grad.iter_mut().zip(&other.grad) {
            *g += s * o;
        }
    }
}

#[inline]
fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Weighted L1 with per-pixel weights: `Σ m|a-b| / (3 Σ m)`.
/// Gradient with respect to `a`; the gradient with respect to `b` is its
/// negation. An all-zero weight map gives loss 0 and zero gradient.
pub fn weighted_l1(a: &Frame, b: &Frame, weights: Option<&[f64]>) -> Result<LossValue> {
    check_dims(a.dims(), b.dims())?;
    let n = a.pixels();
    if let Some(w) = weights {
        if w.len() != n {
            return Err(Error::invalid("L1 weight map size mismatch"));
        }
    }
    let weight = |p: usize| weights.map_or(1.0, |w| w[p]);
    let norm = CHANNELS as f64 * (0..n).map(weight).sum::<f64>();
    if norm == 0.0 {
        return Ok(LossValue::zero(n * CHANNELS));
    }
    let mut value = 0.0;
    let mut grad = vec![0.0; n * CHANNELS];
    for p in 0..n {
        let m = weight(p);
        if m == 0.0 {
            continue;
        }
        for c in 0..CHANNELS {
            let i = p * CHANNELS + c;
            let d = a.data()[i] - b.data()[i];
            value += m * d.abs();
            grad[i] = m * sign(d) / norm;
        }
    }
    Ok(LossValue {
        value: value / norm,
        grad,
    })
}

pub fn l1_loss(a: &Frame, b: &Frame, mask: Option<&SoftMask>) -> Result<LossValue> {
    if let Some(m) = mask {
        check_dims(a.dims(), m.dims())?;
    }
    weighted_l1(a, b, mask.map(|m| m.data()))
}

/// `(1-λ)·L1 + λ·(1-SSIM)/2`.
pub fn photometric_loss(a: &Frame, b: &Frame, lambda_dssim: f64) -> Result<LossValue> {
    let mut out = weighted_l1(a, b, None)?.scaled(1.0 - lambda_dssim);
    if lambda_dssim != 0.0 {
        let d = ssim_loss(a, b)?;
        out.add_scaled(&d, lambda_dssim * 0.5);
    }
    Ok(out)
}

/// Anisotropic total variation with forward differences:
/// `mean|a(x+1,y) - a(x,y)| + mean|a(x,y+1) - a(x,y)|`, each mean taken
/// over its own difference terms and channels.
pub fn tv_loss(a: &Frame) -> LossValue {
    let (h, w) = a.dims();
    let mut value = 0.0;
    let mut grad = vec![0.0; a.data().len()];
    let idx = |x: usize, y: usize, c: usize| (y * w + x) * CHANNELS + c;
    if w > 1 {
        let norm = (h * (w - 1) * CHANNELS) as f64;
        let mut sum = 0.0;
        for y in 0..h {
            for x in 0..w - 1 {
                for c in 0..CHANNELS {
                    let d = a.get(x + 1, y, c) - a.get(x, y, c);
                    sum += d.abs();
                    let s = sign(d) / norm;
                    grad[idx(x + 1, y, c)] += s;
                    grad[idx(x, y, c)] -= s;
                }
            }
        }
        value += sum / norm;
    }
    if h > 1 {
        let norm = ((h - 1) * w * CHANNELS) as f64;
        let mut sum = 0.0;
        for y in 0..h - 1 {
            for x in 0..w {
                for c in 0..CHANNELS {
                    let d = a.get(x, y + 1, c) - a.get(x, y, c);
                    sum += d.abs();
                    let s = sign(d) / norm;
                    grad[idx(x, y + 1, c)] += s;
                    grad[idx(x, y, c)] -= s;
                }
            }
        }
        value += sum / norm;
    }
    LossValue { value, grad }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frame::Plane;

    #[test]
    fn l1_trivial() {
        let a = Frame::filled(3, 3, 1.0);
        let b = Frame::filled(3, 3, 0.0);
        let l = l1_loss(&a, &b, None).unwrap();
        assert_eq!(l.value, 1.0);
        assert!(l.grad.iter().all(|&g| g == 1.0 / 27.0));
        let l = l1_loss(&a, &a, None).unwrap();
        assert_eq!(l.value, 0.0);
        assert!(l.grad.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn l1_zero_mask() {
        let a = Frame::filled(2, 2, 1.0);
        let b = Frame::filled(2, 2, 0.0);
        let m = SoftMask::new(Plane::filled(2, 2, 0.0)).unwrap();
        let l = l1_loss(&a, &b, Some(&m)).unwrap();
        assert_eq!(l, LossValue::zero(12));
    }

    #[test]
    fn l1_mask_normalizes_by_weight() {
        let a = Frame::filled(1, 2, 1.0);
        let b = Frame::filled(1, 2, 0.0);
        let m = SoftMask::new(Plane::new(1, 2, vec![0.5, 0.0]).unwrap()).unwrap();
        assert_eq!(l1_loss(&a, &b, Some(&m)).unwrap().value, 1.0);
    }

    #[test]
    fn photometric_degenerate_weight() {
        let a = Frame::from_fn(12, 12, |x, y, c| ((x + y + c) % 4) as f64 / 4.0);
        let b = Frame::filled(12, 12, 0.3);
        assert_eq!(
            photometric_loss(&a, &b, 0.0).unwrap(),
            l1_loss(&a, &b, None).unwrap()
        );
        assert_eq!(photometric_loss(&a, &a, 0.2).unwrap().value, 0.0);
    }

    #[test]
    fn tv_constant_and_step() {
        assert_eq!(tv_loss(&Frame::filled(4, 5, 0.7)).value, 0.0);
        // step of height 1 between columns 2 and 3 in all channels
        let (h, w) = (4, 6);
        let f = Frame::from_fn(h, w, |x, _, _| if x >= 3 { 1.0 } else { 0.0 });
        let l = tv_loss(&f);
        let expected = (h * 3) as f64 / (h * (w - 1) * 3) as f64;
        assert!((l.value - expected).abs() < 1e-15);
    }
}
