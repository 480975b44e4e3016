//! Tensor-level noise utilities for decayed multi-axis denoising:
//! forward noising, the decaying γ schedule, per-frame/channel statistics
//! alignment, and the weighted combination of the two noise predictions.
//!
//! Tensors are `(T, C, H, W)`; statistics are taken over `H × W` for each
//! `(t, c)`, with population standard deviation. Arithmetic is done in f64
//! and rounded to f32 on output.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::media_io::Tensor4;

/// Standard deviations at or below this are treated as degenerate.
pub const DEGENERATE_STD: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaSchedule {
    pub gamma_start: f64,
    pub gamma_end: f64,
    pub steps: usize,
}

impl Default for GammaSchedule {
    fn default() -> Self {
        GammaSchedule {
            gamma_start: 0.2,
            gamma_end: 0.002,
            steps: 25,
        }
    }
}

impl GammaSchedule {
    pub fn validate(&self) -> Result<()> {
        let ok = self.gamma_end > 0.0
            && self.gamma_end <= self.gamma_start
            && self.gamma_start <= 1.0
            && self.steps >= 2;
        if !ok {
            return Err(Error::Config(format!(
                "gamma schedule needs 0 < end <= start <= 1 and steps >= 2, got {self:?}"
            )));
        }
        Ok(())
    }
}

/// γ at sampling step `i` (0 = first), geometric from start to end.
pub fn gamma_at(sched: &GammaSchedule, i: usize) -> Result<f64> {
    sched.validate()?;
    if i >= sched.steps {
        return Err(Error::invalid(format!(
            "step {i} out of range for {} steps",
            sched.steps
        )));
    }
    if i == 0 || sched.gamma_start == sched.gamma_end {
        return Ok(sched.gamma_start);
    }
    if i == sched.steps - 1 {
        return Ok(sched.gamma_end);
    }
    let ratio = sched.gamma_end / sched.gamma_start;
    Ok(sched.gamma_start * ratio.powf(i as f64 / (sched.steps - 1) as f64))
}

/// Cumulative noise schedule ᾱ_τ, monotonically decreasing in `(0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AlphaSchedule(Vec<f64>);

impl AlphaSchedule {
    pub fn new(alpha_bar: Vec<f64>) -> Result<Self> {
        if alpha_bar.is_empty() {
            return Err(Error::invalid("empty alpha schedule"));
        }
        if alpha_bar.iter().any(|&a| !(a > 0.0 && a <= 1.0)) {
            return Err(Error::invalid("alpha_bar values must lie in (0, 1]"));
        }
        if alpha_bar.windows(2).any(|w| w[1] > w[0]) {
            return Err(Error::invalid("alpha_bar must be non-increasing"));
        }
        Ok(AlphaSchedule(alpha_bar))
    }

    /// ᾱ from a linear β schedule (cumulative product of `1 - β`).
    pub fn linear(beta_start: f64, beta_end: f64, steps: usize) -> Result<Self> {
        if steps == 0 || !(0.0 < beta_start && beta_start <= beta_end && beta_end < 1.0) {
            return Err(Error::invalid("invalid linear beta schedule"));
        }
        let mut acc = 1.0;
        let values = (0..steps)
            .map(|i| {
                let t = if steps == 1 { 0.0 } else { i as f64 / (steps - 1) as f64 };
                acc *= 1.0 - (beta_start + t * (beta_end - beta_start));
                acc
            })
            .collect();
        Self::new(values)
    }

    pub fn get(&self, tau: usize) -> f64 {
        self.0[tau]
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

fn check_same_shape(a: &Tensor4, b: &Tensor4) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::invalid(format!(
            "tensor shapes differ: {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

/// `√ᾱ·z0 + √(1-ᾱ)·ε`.
pub fn forward_noise(z0: &Tensor4, eps: &Tensor4, alpha_bar: f64) -> Result<Tensor4> {
    check_same_shape(z0, eps)?;
    if !(alpha_bar > 0.0 && alpha_bar <= 1.0) {
        return Err(Error::invalid(format!("alpha_bar {alpha_bar} not in (0, 1]")));
    }
    let (a, b) = (alpha_bar.sqrt(), (1.0 - alpha_bar).sqrt());
    let data = z0
        .data()
        .iter()
        .zip(eps.data())
        .map(|(&z, &e)| (a * z as f64 + b * e as f64) as f32)
        .collect();
    Tensor4::new(z0.shape(), data)
}

/// Mean and population standard deviation of a plane.
pub fn plane_stats(v: &[f32]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().map(|&x| x as f64).sum::<f64>() / n;
    let var = v
        .iter()
        .map(|&x| {
            let d = x as f64 - mean;
            d * d
        })
        .sum::<f64>()
        / n;
    (mean, var.sqrt())
}

/// Re-standardizes `eps_yt` to the per-(frame, channel) mean and std of
/// `eps_xy`.
pub fn ain_align(eps_yt: &Tensor4, eps_xy: &Tensor4) -> Result<Tensor4> {
    check_same_shape(eps_yt, eps_xy)?;
    let [t, c, _, _] = eps_yt.shape();
    let planes = (0..t * c)
        .into_par_iter()
        .map(|k| {
            let (frame, channel) = (k / c, k % c);
            let src = eps_yt.plane(frame, channel);
            let (mu_s, sd_s) = plane_stats(src);
            if sd_s <= DEGENERATE_STD {
                return Err(Error::DegenerateStatistics {
                    frame,
                    channel,
                    std: sd_s,
                });
            }
            let (mu_r, sd_r) = plane_stats(eps_xy.plane(frame, channel));
            Ok(src
                .iter()
                .map(|&v| (sd_r * ((v as f64 - mu_s) / sd_s) + mu_r) as f32)
                .collect::<Vec<f32>>())
        })
        .collect::<Result<Vec<_>>>()?;
    Tensor4::new(eps_yt.shape(), planes.concat())
}

/// Blend with explicit γ: `√γ·ε_xy + √(1-γ)·AIN(ε_yt)`, or with the
/// weights exchanged when `swap_weights` is set.
pub fn combine_noise_with_gamma(
    eps_xy: &Tensor4,
    eps_yt: &Tensor4,
    gamma: f64,
    swap_weights: bool,
) -> Result<Tensor4> {
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::invalid(format!("gamma {gamma} not in [0, 1]")));
    }
    let aligned = ain_align(eps_yt, eps_xy)?;
    let (mut w_xy, mut w_yt) = (gamma.sqrt(), (1.0 - gamma).sqrt());
    if swap_weights {
        std::mem::swap(&mut w_xy, &mut w_yt);
    }
    let data = eps_xy
        .data()
        .iter()
        .zip(aligned.data())
        .map(|(&x, &y)| (w_xy * x as f64 + w_yt * y as f64) as f32)
        .collect();
    Tensor4::new(eps_xy.shape(), data)
}

pub fn combine_noise(
    eps_xy: &Tensor4,
    eps_yt: &Tensor4,
    sched: &GammaSchedule,
    step: usize,
) -> Result<Tensor4> {
    combine_noise_with_gamma(eps_xy, eps_yt, gamma_at(sched, step)?, false)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tensor(shape: [usize; 4], seed: u32) -> Tensor4 {
        Tensor4::from_fn(shape, |[a, b, y, x]| {
            let k = (a * 131 + b * 31 + y * 7 + x) as u32 ^ seed.wrapping_mul(2654435761);
            ((k.wrapping_mul(1103515245).wrapping_add(12345) >> 8) % 1000) as f32 / 500.0 - 1.0
        })
        .unwrap()
    }

    #[test]
    fn gamma_endpoints_and_midpoint() {
        let s = GammaSchedule::default();
        assert_eq!(gamma_at(&s, 0).unwrap(), 0.2);
        assert_eq!(gamma_at(&s, 24).unwrap(), 0.002);
        assert!((gamma_at(&s, 12).unwrap() - 0.02).abs() < 1e-15);
        assert!(gamma_at(&s, 25).is_err());
        let flat = GammaSchedule {
            gamma_start: 0.3,
            gamma_end: 0.3,
            steps: 5,
        };
        for i in 0..5 {
            assert_eq!(gamma_at(&flat, i).unwrap(), 0.3);
        }
    }

    #[test]
    fn invalid_gamma_schedules() {
        for s in [
            GammaSchedule { gamma_start: 0.1, gamma_end: 0.2, steps: 5 },
            GammaSchedule { gamma_start: 0.2, gamma_end: 0.0, steps: 5 },
            GammaSchedule { gamma_start: 1.2, gamma_end: 0.1, steps: 5 },
            GammaSchedule { gamma_start: 0.2, gamma_end: 0.1, steps: 1 },
        ] {
            assert!(gamma_at(&s, 0).is_err());
        }
    }

    #[test]
    fn forward_noise_cases() {
        let z0 = Tensor4::from_fn([1, 1, 2, 2], |_| 1.0).unwrap();
        let eps = Tensor4::from_fn([1, 1, 2, 2], |_| 0.0).unwrap();
        let out = forward_noise(&z0, &eps, 0.25).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.5));
        let e = tensor([1, 2, 3, 3], 4);
        let z = tensor([1, 2, 3, 3], 5);
        assert_eq!(forward_noise(&z, &e, 1.0).unwrap(), z);
        let near = forward_noise(&z, &e, 1e-14).unwrap();
        for (a, b) in near.data().iter().zip(e.data()) {
            assert!((a - b).abs() < 1e-6);
        }
        assert!(forward_noise(&z, &e, 0.0).is_err());
    }

    #[test]
    fn ain_identity_and_affine_invariance() {
        let xy = tensor([2, 3, 4, 5], 1);
        let out = ain_align(&xy, &xy).unwrap();
        for (a, b) in out.data().iter().zip(xy.data()) {
            assert!((a - b).abs() < 1e-6);
        }
        let yt = xy.map(|v| 2.0 * v + 3.0);
        let out = ain_align(&yt, &xy).unwrap();
        for (a, b) in out.data().iter().zip(xy.data()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn ain_degenerate_channel() {
        let xy = tensor([2, 2, 3, 3], 1);
        let yt = Tensor4::from_fn([2, 2, 3, 3], |[a, b, y, x]| {
            if a == 1 && b == 0 {
                0.5
            } else {
                (y * 3 + x) as f32
            }
        })
        .unwrap();
        assert!(matches!(
            ain_align(&yt, &xy),
            Err(Error::DegenerateStatistics { frame: 1, channel: 0, .. })
        ));
    }

    #[test]
    fn combine_degenerate_gamma_one() {
        let xy = tensor([1, 2, 4, 4], 3);
        let yt = tensor([1, 2, 4, 4], 9);
        let s = GammaSchedule {
            gamma_start: 1.0,
            gamma_end: 1.0,
            steps: 3,
        };
        assert_eq!(combine_noise(&xy, &yt, &s, 1).unwrap(), xy);
    }

    #[test]
    fn combine_equal_inputs_scales() {
        let xy = tensor([1, 2, 4, 4], 3);
        let g: f64 = 0.2;
        let out = combine_noise(&xy, &xy, &GammaSchedule::default(), 0).unwrap();
        let k = g.sqrt() + (1.0 - g).sqrt();
        for (a, b) in out.data().iter().zip(xy.data()) {
            assert!((*a as f64 - k * *b as f64).abs() < 1e-6);
        }
    }

    #[test]
    fn alpha_schedule_validation() {
        assert!(AlphaSchedule::new(vec![1.0, 0.9, 0.95]).is_err());
        assert!(AlphaSchedule::new(vec![1.0, 0.0]).is_err());
        let s = AlphaSchedule::linear(1e-4, 0.02, 1000).unwrap();
        assert_eq!(s.len(), 1000);
        assert!(s.get(999) < s.get(0));
    }
}
