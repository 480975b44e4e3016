//! SSIM with an 11×11 Gaussian window (σ = 1.5), C1 = 0.01², C2 = 0.03²,
//! and its analytic gradient.
//!
//! The window is applied separably with mirror-reflect padding (no edge
//! duplication), so the map has the frame's full resolution and constant
//! images have zero local variance everywhere.

use crate::error::{check_dims, Error, Result};
use crate::frame::{Frame, Plane, CHANNELS};

use super::LossValue;

pub const WINDOW: usize = 11;
pub const SIGMA: f64 = 1.5;
pub const C1: f64 = 0.01 * 0.01;
pub const C2: f64 = 0.03 * 0.03;
const RADIUS: isize = (WINDOW / 2) as isize;

pub fn gaussian_kernel() -> [f64; WINDOW] {
    let mut k = [0.0; WINDOW];
    for (i, v) in k.iter_mut().enumerate() {
        let d = i as f64 - RADIUS as f64;
        *v = (-d * d / (2.0 * SIGMA * SIGMA)).exp();
    }
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

#[inline]
fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let r = if i < 0 {
        -i
    } else if i >= n {
        2 * (n - 1) - i
    } else {
        i
    };
    r as usize
}

/// Separable Gaussian blur over an `h × w` scalar image.
fn blur(src: &[f64], h: usize, w: usize, k: &[f64; WINDOW]) -> Vec<f64> {
    let mut tmp = vec![0.0; h * w];
    for y in 0..h {
        let row = &src[y * w..(y + 1) * w];
        for x in 0..w {
            let mut acc = 0.0;
            for (j, g) in k.iter().enumerate() {
                acc += g * row[reflect(x as isize + j as isize - RADIUS, w)];
            }
            tmp[y * w + x] = acc;
        }
    }
    let mut out = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (j, g) in k.iter().enumerate() {
                acc += g * tmp[reflect(y as isize + j as isize - RADIUS, h) * w + x];
            }
            out[y * w + x] = acc;
        }
    }
    out
}

/// Transpose of [`blur`].
fn blur_adjoint(grad: &[f64], h: usize, w: usize, k: &[f64; WINDOW]) -> Vec<f64> {
    let mut tmp = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            let g = grad[y * w + x];
            for (j, kj) in k.iter().enumerate() {
                tmp[reflect(y as isize + j as isize - RADIUS, h) * w + x] += kj * g;
            }
        }
    }
    let mut out = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            let g = tmp[y * w + x];
            for (j, kj) in k.iter().enumerate() {
                out[y * w + reflect(x as isize + j as isize - RADIUS, w)] += kj * g;
            }
        }
    }
    out
}

fn check_size(a: &Frame, b: &Frame) -> Result<()> {
    check_dims(a.dims(), b.dims())?;
    let (h, w) = a.dims();
    if h < WINDOW || w < WINDOW {
        return Err(Error::invalid(format!(
            "SSIM needs frames of at least {WINDOW}x{WINDOW}, got {w}x{h}"
        )));
    }
    Ok(())
}

/// Local moments of one channel pair.
struct Moments {
    mu_x: Vec<f64>,
    mu_y: Vec<f64>,
    m_xx: Vec<f64>,
    m_yy: Vec<f64>,
    m_xy: Vec<f64>,
}

impl Moments {
    fn compute(x: &[f64], y: &[f64], h: usize, w: usize, k: &[f64; WINDOW]) -> Self {
        let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
        let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
        let xy: Vec<f64> = x.iter().zip(y).map(|(p, q)| p * q).collect();
        Moments {
            mu_x: blur(x, h, w, k),
            mu_y: blur(y, h, w, k),
            m_xx: blur(&xx, h, w, k),
            m_yy: blur(&yy, h, w, k),
            m_xy: blur(&xy, h, w, k),
        }
    }

    #[inline]
    fn terms(&self, p: usize) -> (f64, f64, f64, f64) {
        let (mx, my) = (self.mu_x[p], self.mu_y[p]);
        let sxx = self.m_xx[p] - mx * mx;
        let syy = self.m_yy[p] - my * my;
        let sxy = self.m_xy[p] - mx * my;
        let a1 = 2.0 * mx * my + C1;
        let a2 = 2.0 * sxy + C2;
        let b1 = mx * mx + my * my + C1;
        let b2 = sxx + syy + C2;
        (a1, a2, b1, b2)
    }
}

fn channel_data(f: &Frame, c: usize) -> Vec<f64> {
    f.data().iter().skip(c).step_by(CHANNELS).copied().collect()
}

/// Per-pixel SSIM averaged over the three channels.
pub fn ssim_map(a: &Frame, b: &Frame) -> Result<Plane> {
    check_size(a, b)?;
    let (h, w) = a.dims();
    let k = gaussian_kernel();
    let mut acc = vec![0.0; h * w];
    for c in 0..CHANNELS {
        let m = Moments::compute(&channel_data(a, c), &channel_data(b, c), h, w, &k);
        for (p, v) in acc.iter_mut().enumerate() {
            let (a1, a2, b1, b2) = m.terms(p);
            *v += a1 * a2 / (b1 * b2);
        }
    }
    acc.iter_mut().for_each(|v| *v /= CHANNELS as f64);
    Plane::new(h, w, acc)
}

/// Gradient of `Σ_p weights[p] · SSIM_map[p]` with respect to `a`, where
/// `SSIM_map` is the channel-averaged map. Returns `(weighted sum, grad)`.
pub fn weighted_ssim_grad(a: &Frame, b: &Frame, weights: &[f64]) -> Result<(f64, Vec<f64>)> {
    check_size(a, b)?;
    let (h, w) = a.dims();
    let n = h * w;
    if weights.len() != n {
        return Err(Error::invalid("SSIM weight map size mismatch"));
    }
    let k = gaussian_kernel();
    let mut total = 0.0;
    let mut grad = vec![0.0; n * CHANNELS];
    for c in 0..CHANNELS {
        let x = channel_data(a, c);
        let y = channel_data(b, c);
        if x == y {
            // SSIM is at its maximum of 1 everywhere; the analytic terms
            // would only cancel up to roundoff.
            total += weights.iter().sum::<f64>();
            continue;
        }
        let m = Moments::compute(&x, &y, h, w, &k);
        let mut d_mu = vec![0.0; n];
        let mut d_mxx = vec![0.0; n];
        let mut d_mxy = vec![0.0; n];
        for p in 0..n {
            let wgt = weights[p] / CHANNELS as f64;
            let (a1, a2, b1, b2) = m.terms(p);
            let s = a1 * a2 / (b1 * b2);
            total += weights[p] * s;
            if wgt == 0.0 {
                continue;
            }
            let (mx, my) = (m.mu_x[p], m.mu_y[p]);
            d_mu[p] = wgt
                * ((2.0 * my * a2 - 2.0 * my * a1) / (b1 * b2) - s * 2.0 * mx / b1
                    + s * 2.0 * mx / b2);
            d_mxx[p] = wgt * (-s / b2);
            d_mxy[p] = wgt * (2.0 * a1 / (b1 * b2));
        }
        let g_mu = blur_adjoint(&d_mu, h, w, &k);
        let g_xx = blur_adjoint(&d_mxx, h, w, &k);
        let g_xy = blur_adjoint(&d_mxy, h, w, &k);
        for p in 0..n {
            grad[p * CHANNELS + c] = g_mu[p] + 2.0 * x[p] * g_xx[p] + y[p] * g_xy[p];
        }
    }
    total /= CHANNELS as f64;
    Ok((total, grad))
}

/// Mean SSIM and its gradient with respect to `a`.
pub fn mean_ssim_grad(a: &Frame, b: &Frame) -> Result<(f64, Vec<f64>)> {
    let n = a.pixels();
    let (sum, mut grad) = weighted_ssim_grad(a, b, &vec![1.0; n])?;
    let inv = 1.0 / n as f64;
    grad.iter_mut().for_each(|g| *g *= inv);
    Ok((sum / n as f64, grad))
}

/// `1 - mean(SSIM)`, gradient with respect to `a`.
pub fn ssim_loss(a: &Frame, b: &Frame) -> Result<LossValue> {
    let (s, mut g) = mean_ssim_grad(a, b)?;
    g.iter_mut().for_each(|v| *v = -*v);
    Ok(LossValue {
        value: 1.0 - s,
        grad: g,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_normalized_and_symmetric() {
        let k = gaussian_kernel();
        assert!((k.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        for i in 0..WINDOW {
            assert_eq!(k[i], k[WINDOW - 1 - i]);
        }
    }

    #[test]
    fn blur_adjoint_is_transpose() {
        let (h, w) = (12, 13);
        let k = gaussian_kernel();
        let a: Vec<f64> = (0..h * w).map(|i| ((i * 37) % 11) as f64 - 5.0).collect();
        let b: Vec<f64> = (0..h * w).map(|i| ((i * 17) % 7) as f64 * 0.3).collect();
        let lhs: f64 = blur(&a, h, w, &k).iter().zip(&b).map(|(p, q)| p * q).sum();
        let rhs: f64 = a.iter().zip(blur_adjoint(&b, h, w, &k)).map(|(p, q)| p * q).sum();
        assert!((lhs - rhs).abs() < 1e-10 * lhs.abs().max(1.0));
    }

    #[test]
    fn blur_preserves_constants() {
        let k = gaussian_kernel();
        let out = blur(&vec![0.3; 11 * 11], 11, 11, &k);
        assert!(out.iter().all(|v| (v - 0.3).abs() < 1e-15));
    }

    #[test]
    fn identical_frames_score_one() {
        let f = Frame::from_fn(16, 16, |x, y, c| ((x * 5 + y * 3 + c) % 9) as f64 / 9.0);
        let l = ssim_loss(&f, &f).unwrap();
        assert!(l.value.abs() < 1e-12);
        assert!(l.grad.iter().all(|g| *g == 0.0));
    }

    #[test]
    fn too_small_rejected() {
        let f = Frame::filled(10, 16, 0.5);
        assert!(ssim_map(&f, &f).is_err());
    }
}
