//! Stage I: per-frame affine exposure alignment.
//!
//! Each frame gets a 3×4 color transform `E_t = [A | b]`, optimized so the
//! transformed frame stays close to the relit frame (photometric term) while
//! matching its flow-warped successor (masked L1 term).

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_dims, Error, Result};
use crate::frame::{Frame, VideoVolume, CHANNELS};
use crate::mask::{compute_masks, MaskConfig, SoftMask};
use crate::media_io::FlowSet;
use crate::objectives::{lr_schedule, photometric_loss, weighted_l1, AdamConfig, AdamState};
use crate::warp::{flow_taps, warp_adjoint_accumulate, warp_frame_with_taps, Taps};

pub const EMBEDDING_PARAMS: usize = 12;

#[derive(Debug, Clone, PartialEq)]
pub struct AppearanceEmbedding {
    pub frame: usize,
    /// Row-major `[A | b]`.
    pub matrix: [[f64; 4]; 3],
}

impl AppearanceEmbedding {
    pub fn identity(frame: usize) -> Self {
        AppearanceEmbedding {
            frame,
            matrix: [[1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0]],
        }
    }

    pub fn params(&self) -> [f64; EMBEDDING_PARAMS] {
        let mut p = [0.0; EMBEDDING_PARAMS];
        for (i, row) in self.matrix.iter().enumerate() {
            p[i * 4..i * 4 + 4].copy_from_slice(row);
        }
        p
    }

    pub fn set_params(&mut self, p: &[f64]) {
        for (i, row) in self.matrix.iter_mut().enumerate() {
            row.copy_from_slice(&p[i * 4..i * 4 + 4]);
        }
    }

    /// Max-abs distance from `[I | 0]`.
    pub fn distance_from_identity(&self) -> f64 {
        let id = Self::identity(self.frame);
        self.params()
            .iter()
            .zip(id.params())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    #[inline]
    pub fn apply_color(&self, c: [f64; 3]) -> [f64; 3] {
        let m = &self.matrix;
        let mut out = [0.0; 3];
        for (i, o) in out.iter_mut().enumerate() {
            *o = m[i][0] * c[0] + m[i][1] * c[1] + m[i][2] * c[2] + m[i][3];
        }
        out
    }
}

/// `c ↦ A c + b` for every pixel. Not clamped.
pub fn apply_embedding(e: &AppearanceEmbedding, frame: &Frame) -> Frame {
    let mut data = Vec::with_capacity(frame.data().len());
    for p in 0..frame.pixels() {
        data.extend_from_slice(&e.apply_color(frame.pixel(p)));
    }
    Frame::new(frame.height(), frame.width(), data).expect("finite affine image of finite frame")
}

/// Pulls a gradient on the transformed frame back to the 12 parameters.
pub fn embedding_grad(frame: &Frame, grad_out: &[f64]) -> [f64; EMBEDDING_PARAMS] {
    let mut g = [0.0; EMBEDDING_PARAMS];
    for p in 0..frame.pixels() {
        let c = frame.pixel(p);
        for i in 0..CHANNELS {
            let go = grad_out[p * CHANNELS + i];
            g[i * 4] += go * c[0];
            g[i * 4 + 1] += go * c[1];
            g[i * 4 + 2] += go * c[2];
            g[i * 4 + 3] += go;
        }
    }
    g
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageOneConfig {
    pub lambda_e: f64,
    pub lambda_dssim: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr_start: f64,
    pub lr_end: f64,
    pub mask: MaskConfig,
    pub adam: AdamConfig,
    pub seed: u64,
}

impl Default for StageOneConfig {
    fn default() -> Self {
        StageOneConfig {
            lambda_e: 0.8,
            lambda_dssim: 0.2,
            epochs: 35,
            batch_size: 16,
            lr_start: 0.01,
            lr_end: 0.001,
            mask: MaskConfig::default(),
            adam: AdamConfig::default(),
            seed: 0,
        }
    }
}

impl StageOneConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.lambda_e) {
            return Err(Error::Config(format!("lambda_e must be in [0, 1], got {}", self.lambda_e)));
        }
        if !(0.0..=1.0).contains(&self.lambda_dssim) {
            return Err(Error::Config("lambda_dssim must be in [0, 1]".into()));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("stage 1 epochs and batch size must be >= 1".into()));
        }
        if !(self.lr_start > 0.0 && self.lr_end > 0.0) {
            return Err(Error::Config("stage 1 learning rates must be positive".into()));
        }
        self.mask.validate()
    }
}

/// Stage I loss of one batch entry with gradients for the embeddings it
/// touches.
#[derive(Debug, Clone, PartialEq)]
pub struct StageOneLoss {
    pub value: f64,
    pub grad_current: [f64; EMBEDDING_PARAMS],
    /// Gradient for `E_{t+1}`; `None` for the last frame's entry.
    pub grad_next: Option<[f64; EMBEDDING_PARAMS]>,
}

/// Precomputed inputs shared by all loss evaluations.
struct StageOneProblem<'a> {
    relit: &'a VideoVolume,
    masks: &'a [SoftMask],
    taps: Vec<Vec<Option<Taps>>>,
    cfg: &'a StageOneConfig,
}

impl<'a> StageOneProblem<'a> {
    fn new(
        relit: &'a VideoVolume,
        flows: &FlowSet,
        masks: &'a [SoftMask],
        cfg: &'a StageOneConfig,
    ) -> Result<Self> {
        relit.require_optimizable()?;
        flows.check_video(relit.len(), relit.dims())?;
        if masks.len() != relit.len() - 1 {
            return Err(Error::invalid(format!(
                "need {} masks, got {}",
                relit.len() - 1,
                masks.len()
            )));
        }
        for m in masks {
            check_dims(relit.dims(), m.dims())?;
        }
        let taps = flows.forward_all().par_iter().map(flow_taps).collect();
        Ok(StageOneProblem {
            relit,
            masks,
            taps,
            cfg,
        })
    }

    /// Entry `t < T-1` is the full pair loss; `t = T-1` is the photometric
    /// anchor of the last frame.
    fn entry(&self, t: usize, embeddings: &[AppearanceEmbedding]) -> Result<StageOneLoss> {
        let cfg = self.cfg;
        let frame_t = self.relit.frame(t);
        let tilde_t = apply_embedding(&embeddings[t], frame_t);
        let photo = photometric_loss(&tilde_t, frame_t, cfg.lambda_dssim)?;
        let mut value = (1.0 - cfg.lambda_e) * photo.value;
        let mut grad_t: Vec<f64> = photo.grad.iter().map(|g| (1.0 - cfg.lambda_e) * g).collect();

        let grad_next = if t + 1 < self.relit.len() && cfg.lambda_e != 0.0 {
            let frame_n = self.relit.frame(t + 1);
            let tilde_n = apply_embedding(&embeddings[t + 1], frame_n);
            let taps = &self.taps[t];
            let (warped, valid) = warp_frame_with_taps(&tilde_n, taps);
            let weights: Vec<f64> = self.masks[t]
                .data()
                .iter()
                .zip(valid.data())
                .map(|(&m, &v)| if v { m } else { 0.0 })
                .collect();
            let l1 = weighted_l1(&tilde_t, &warped, Some(&weights))?;
            value += cfg.lambda_e * l1.value;
            for (g, l) in grad_t.iter_mut().zip(&l1.grad) {
                *g += cfg.lambda_e * l;
            }
            let grad_warped: Vec<f64> = l1.grad.iter().map(|g| -cfg.lambda_e * g).collect();
            let mut grad_n = vec![0.0; grad_warped.len()];
            warp_adjoint_accumulate(&grad_warped, taps, &mut grad_n);
            Some(embedding_grad(frame_n, &grad_n))
        } else if t + 1 < self.relit.len() {
            Some([0.0; EMBEDDING_PARAMS])
        } else {
            None
        };

        Ok(StageOneLoss {
            value,
            grad_current: embedding_grad(frame_t, &grad_t),
            grad_next,
        })
    }
}

/// Stage I loss for the pair `(t, t+1)`, `t ∈ [0, T-2]`.
pub fn stage1_loss(
    t: usize,
    embeddings: &[AppearanceEmbedding],
    relit: &VideoVolume,
    flows: &FlowSet,
    masks: &[SoftMask],
    cfg: &StageOneConfig,
) -> Result<StageOneLoss> {
    if embeddings.len() != relit.len() {
        return Err(Error::invalid("one embedding per frame required"));
    }
    if t + 1 >= relit.len() {
        return Err(Error::invalid(format!(
            "pair index {t} out of range for {} frames",
            relit.len()
        )));
    }
    StageOneProblem::new(relit, flows, masks, cfg)?.entry(t, embeddings)
}

#[derive(Debug, Clone)]
pub struct StageOneResult {
    pub embeddings: Vec<AppearanceEmbedding>,
    /// Transformed relit video, clamped to `[0, 1]`.
    pub aligned: VideoVolume,
    /// Mean entry loss per epoch.
    pub loss_curve: Vec<f64>,
}

/// Runs Stage I with masks computed from the source video.
pub fn run_stage1(
    relit: &VideoVolume,
    source: &VideoVolume,
    flows: &FlowSet,
    cfg: &StageOneConfig,
) -> Result<StageOneResult> {
    check_dims(relit.dims(), source.dims())?;
    if relit.len() != source.len() {
        return Err(Error::invalid("relit and source videos differ in length"));
    }
    let masks = compute_masks(source, flows, &cfg.mask)?;
    run_stage1_with_masks(relit, flows, &masks, cfg)
}

pub fn run_stage1_with_masks(
    relit: &VideoVolume,
    flows: &FlowSet,
    masks: &[SoftMask],
    cfg: &StageOneConfig,
) -> Result<StageOneResult> {
    cfg.validate()?;
    let problem = StageOneProblem::new(relit, flows, masks, cfg)?;
    let frames = relit.len();
    let mut embeddings: Vec<AppearanceEmbedding> =
        (0..frames).map(AppearanceEmbedding::identity).collect();
    let mut optimizers: Vec<AdamState> = (0..frames)
        .map(|_| AdamState::new(EMBEDDING_PARAMS, cfg.adam))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..frames).collect();
    let mut loss_curve = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let lr = lr_schedule(epoch, cfg.epochs, cfg.lr_start, cfg.lr_end);
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let losses = batch
                .par_iter()
                .map(|&t| problem.entry(t, &embeddings))
                .collect::<Result<Vec<_>>>()?;
            let mut grads = vec![[0.0; EMBEDDING_PARAMS]; frames];
            let mut touched = vec![false; frames];
            let scale = 1.0 / batch.len() as f64;
            for (&t, loss) in batch.iter().zip(&losses) {
                epoch_loss += loss.value;
                touched[t] = true;
                for (g, v) in grads[t].iter_mut().zip(&loss.grad_current) {
                    *g += scale * v;
                }
                if let Some(gn) = &loss.grad_next {
                    touched[t + 1] = true;
                    for (g, v) in grads[t + 1].iter_mut().zip(gn) {
                        *g += scale * v;
                    }
                }
            }
            for t in 0..frames {
                if !touched[t] {
                    continue;
                }
                let mut p = embeddings[t].params();
                optimizers[t].step(lr, &mut p, &grads[t])?;
                embeddings[t].set_params(&p);
            }
        }
        loss_curve.push(epoch_loss / frames as f64);
    }

    let aligned = VideoVolume::new(
        relit
            .frames()
            .iter()
            .zip(&embeddings)
            .map(|(f, e)| apply_embedding(e, f).clamped())
            .collect(),
    )?;
    Ok(StageOneResult {
        embeddings,
        aligned,
        loss_curve,
    })
}

/// One line per frame: index followed by the 12 parameters row-major.
pub fn format_embeddings(embeddings: &[AppearanceEmbedding]) -> String {
    let mut s = String::new();
    for e in embeddings {
        s.push_str(&e.frame.to_string());
        for p in e.params() {
            s.push(' ');
            s.push_str(&format!("{p:e}"));
        }
        s.push('\n');
    }
    s
}

pub fn parse_embeddings(text: &str) -> Result<Vec<AppearanceEmbedding>> {
    let malformed = |line: usize, msg: String| Error::Malformed {
        what: "embeddings file",
        message: format!("line {line}: {msg}"),
    };
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() != EMBEDDING_PARAMS + 1 {
            return Err(malformed(i + 1, format!("expected 13 fields, found {}", toks.len())));
        }
        let frame = toks[0]
            .parse()
            .map_err(|e| malformed(i + 1, format!("{e}")))?;
        let params = toks[1..]
            .iter()
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| malformed(i + 1, format!("{e}")))?;
        let mut e = AppearanceEmbedding::identity(frame);
        e.set_params(&params);
        out.push(e);
    }
    Ok(out)
}

pub fn save_embeddings(path: &Path, embeddings: &[AppearanceEmbedding]) -> Result<()> {
    std::fs::write(path, format_embeddings(embeddings)).map_err(|e| Error::io(path, e))
}

pub fn load_embeddings(path: &Path) -> Result<Vec<AppearanceEmbedding>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_embeddings(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn textured(h: usize, w: usize) -> Frame {
        Frame::from_fn(h, w, |x, y, c| 0.2 + 0.6 * (((x * 7 + y * 3 + c * 5) % 11) as f64 / 10.0))
    }

    #[test]
    fn identity_embedding_is_noop() {
        let f = textured(4, 4);
        assert_eq!(apply_embedding(&AppearanceEmbedding::identity(0), &f), f);
    }

    #[test]
    fn half_gain() {
        let mut e = AppearanceEmbedding::identity(0);
        for i in 0..3 {
            e.matrix[i][i] = 0.5;
        }
        let out = apply_embedding(&e, &Frame::filled(2, 2, 1.0));
        assert!(out.data().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn embedding_text_round_trip() {
        let mut e = AppearanceEmbedding::identity(3);
        e.set_params(&[1.1, 0.2, -0.3, 0.01, 0.0, 0.9, 1e-9, -0.02, 0.3, 0.1, 1.2, 0.0]);
        let es = vec![AppearanceEmbedding::identity(0), e];
        assert_eq!(parse_embeddings(&format_embeddings(&es)).unwrap(), es);
        assert!(parse_embeddings("0 1 2").is_err());
    }

    #[test]
    fn static_identity_loss_is_zero() {
        let f = textured(16, 16);
        let video = VideoVolume::new(vec![f.clone(), f.clone(), f]).unwrap();
        let flows = FlowSet::zeros(3, 16, 16);
        let masks = vec![SoftMask::full(16, 16); 2];
        let es: Vec<_> = (0..3).map(AppearanceEmbedding::identity).collect();
        let cfg = StageOneConfig::default();
        let l = stage1_loss(0, &es, &video, &flows, &masks, &cfg).unwrap();
        assert_eq!(l.value, 0.0);
        assert!(l.grad_current.iter().all(|g| g.abs() < 1e-12));
    }

    #[test]
    fn rejects_last_pair_index() {
        let f = textured(16, 16);
        let video = VideoVolume::new(vec![f.clone(), f]).unwrap();
        let flows = FlowSet::zeros(2, 16, 16);
        let masks = vec![SoftMask::full(16, 16)];
        let es: Vec<_> = (0..2).map(AppearanceEmbedding::identity).collect();
        assert!(stage1_loss(1, &es, &video, &flows, &masks, &StageOneConfig::default()).is_err());
    }

    #[test]
    fn bad_config() {
        let cfg = StageOneConfig {
            lambda_e: 1.5,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }
}
