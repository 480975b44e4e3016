//! Stage II: optimize the canonical colors under TV, SSIM and masked warp
//! terms evaluated on the scattered frames.

use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_dims, Error, Result};
use crate::frame::VideoVolume;
use crate::mask::{binarize_mask, SoftMask};
use crate::media_io::FlowSet;
use crate::objectives::{ssim_loss, tv_loss, weighted_l1, AdamConfig, AdamState, LossValue};
use crate::warp::{flow_taps, warp_adjoint_accumulate, warp_frame_with_taps, Taps};

use super::keys::{build_keys, DepthInput, KeyConfig, KeyVolume};
use super::tensor::{gather, scatter, scatter_grad_accumulate, UniqueVideoTensor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTwoConfig {
    pub lambda_u: f64,
    pub lambda_tv: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub keys: KeyConfig,
    pub adam: AdamConfig,
    pub seed: u64,
}

impl Default for StageTwoConfig {
    fn default() -> Self {
        StageTwoConfig {
            lambda_u: 0.8,
            lambda_tv: 0.01,
            epochs: 70,
            batch_size: 16,
            lr: 0.05,
            keys: KeyConfig::default(),
            adam: AdamConfig::default(),
            seed: 0,
        }
    }
}

impl StageTwoConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.lambda_u) {
            return Err(Error::Config(format!("lambda_u must be in [0, 1], got {}", self.lambda_u)));
        }
        if !(self.lambda_tv >= 0.0 && self.lambda_tv.is_finite()) {
            return Err(Error::Config(format!("lambda_tv must be >= 0, got {}", self.lambda_tv)));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("stage 2 epochs and batch size must be >= 1".into()));
        }
        if !(self.lr > 0.0) {
            return Err(Error::Config("stage 2 learning rate must be positive".into()));
        }
        if let Some(v) = self.keys.voxel_size {
            if !(v > 0.0) {
                return Err(Error::Config(format!("voxel_size must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

struct StageTwoProblem<'a> {
    target: &'a VideoVolume,
    masks: &'a [SoftMask],
    taps: Vec<Vec<Option<Taps>>>,
    cfg: &'a StageTwoConfig,
}

/// Per-pixel gradients of one entry for frames t and t+1.
struct EntryGrad {
    value: f64,
    frame_t: Vec<f64>,
    frame_next: Option<Vec<f64>>,
}

impl<'a> StageTwoProblem<'a> {
    fn new(
        keys: &KeyVolume,
        target: &'a VideoVolume,
        flows: &FlowSet,
        masks: &'a [SoftMask],
        cfg: &'a StageTwoConfig,
    ) -> Result<Self> {
        target.require_optimizable()?;
        check_dims(keys.dims(), target.dims())?;
        if keys.frames() != target.len() {
            return Err(Error::invalid("keys and target differ in frame count"));
        }
        flows.check_video(target.len(), target.dims())?;
        if masks.len() != target.len() - 1 {
            return Err(Error::invalid(format!(
                "need {} masks, got {}",
                target.len() - 1,
                masks.len()
            )));
        }
        for m in masks {
            check_dims(target.dims(), m.dims())?;
        }
        let taps = flows.forward_all().par_iter().map(flow_taps).collect();
        Ok(StageTwoProblem {
            target,
            masks,
            taps,
            cfg,
        })
    }

    fn entry(&self, t: usize, uvt: &UniqueVideoTensor) -> Result<EntryGrad> {
        let cfg = self.cfg;
        let frame_t = uvt.scatter_frame(t);
        let mut total = LossValue::zero(frame_t.data().len());
        if cfg.lambda_tv != 0.0 {
            total.add_scaled(&tv_loss(&frame_t), cfg.lambda_tv);
        }
        if cfg.lambda_u != 1.0 {
            total.add_scaled(&ssim_loss(&frame_t, self.target.frame(t))?, 1.0 - cfg.lambda_u);
        }
        let frame_next = if t + 1 < self.target.len() && cfg.lambda_u != 0.0 {
            let next = uvt.scatter_frame(t + 1);
            let taps = &self.taps[t];
            let (warped, valid) = warp_frame_with_taps(&next, taps);
            let weights: Vec<f64> = self.masks[t]
                .data()
                .iter()
                .zip(valid.data())
                .map(|(&m, &v)| if v { m } else { 0.0 })
                .collect();
            let l1 = weighted_l1(&frame_t, &warped, Some(&weights))?;
            total.add_scaled(&l1, cfg.lambda_u);
            let grad_warped: Vec<f64> = l1.grad.iter().map(|g| -cfg.lambda_u * g).collect();
            let mut g = vec![0.0; grad_warped.len()];
            warp_adjoint_accumulate(&grad_warped, taps, &mut g);
            Some(g)
        } else {
            None
        };
        Ok(EntryGrad {
            value: total.value,
            frame_t: total.grad,
            frame_next,
        })
    }

    fn accumulate(&self, keys: &KeyVolume, t: usize, e: &EntryGrad, scale: f64, grad_u: &mut [f64]) {
        let scaled = |g: &[f64]| g.iter().map(|v| v * scale).collect::<Vec<_>>();
        scatter_grad_accumulate(keys, t, &scaled(&e.frame_t), grad_u);
        if let Some(g) = &e.frame_next {
            scatter_grad_accumulate(keys, t + 1, &scaled(g), grad_u);
        }
    }
}

/// Stage II loss at pair `(t, t+1)` (or the last frame's TV + SSIM entry
/// when `t = T-1`), with gradient with respect to the UVT values.
pub fn stage2_loss(
    t: usize,
    uvt: &UniqueVideoTensor,
    target: &VideoVolume,
    flows: &FlowSet,
    masks: &[SoftMask],
    cfg: &StageTwoConfig,
) -> Result<LossValue> {
    if t >= target.len() {
        return Err(Error::invalid(format!("frame {t} out of range")));
    }
    let keys = uvt.keys();
    let problem = StageTwoProblem::new(keys, target, flows, masks, cfg)?;
    let e = problem.entry(t, uvt)?;
    let mut grad = vec![0.0; uvt.values().len()];
    problem.accumulate(keys, t, &e, 1.0, &mut grad);
    Ok(LossValue {
        value: e.value,
        grad,
    })
}

#[derive(Debug, Clone)]
pub struct StageTwoResult {
    /// Scattered optimized video, clamped to `[0, 1]`.
    pub output: VideoVolume,
    pub uvt: UniqueVideoTensor,
    pub loss_curve: Vec<f64>,
}

/// Builds keys from the source video and runs Stage II on `aligned`.
pub fn run_stage2(
    aligned: &VideoVolume,
    source: &VideoVolume,
    flows: &FlowSet,
    masks: &[SoftMask],
    depth: Option<DepthInput<'_>>,
    cfg: &StageTwoConfig,
) -> Result<StageTwoResult> {
    cfg.validate()?;
    check_dims(aligned.dims(), source.dims())?;
    let binary: Vec<_> = masks.iter().map(binarize_mask).collect();
    let keys = build_keys(source, flows.forward_all(), &binary, depth, &cfg.keys)?;
    run_stage2_with_keys(aligned, Arc::new(keys), flows, masks, cfg)
}

pub fn run_stage2_with_keys(
    aligned: &VideoVolume,
    keys: Arc<KeyVolume>,
    flows: &FlowSet,
    masks: &[SoftMask],
    cfg: &StageTwoConfig,
) -> Result<StageTwoResult> {
    cfg.validate()?;
    let problem = StageTwoProblem::new(&keys, aligned, flows, masks, cfg)?;
    let mut uvt = gather(aligned, keys.clone())?;
    let frames = aligned.len();
    let mut adam = AdamState::new(uvt.values().len(), cfg.adam);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..frames).collect();
    let mut loss_curve = Vec::with_capacity(cfg.epochs);

    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let entries = batch
                .par_iter()
                .map(|&t| problem.entry(t, &uvt))
                .collect::<Result<Vec<_>>>()?;
            let mut grad = vec![0.0; uvt.values().len()];
            let scale = 1.0 / batch.len() as f64;
            for (&t, e) in batch.iter().zip(&entries) {
                epoch_loss += e.value;
                problem.accumulate(&keys, t, e, scale, &mut grad);
            }
            adam.step(cfg.lr, uvt.values_mut(), &grad)?;
        }
        loss_curve.push(epoch_loss / frames as f64);
    }

    let output = scatter(&uvt).map_frames(|f| f.clamped());
    Ok(StageTwoResult {
        output,
        uvt,
        loss_curve,
    })
}
