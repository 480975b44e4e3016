//! Command implementations shared by the CLI and tests.
//!
//! Frames written between stages go through 16-bit PNG, and the monolithic
//! `run` quantizes the same way in memory, so `stage1` followed by `stage2`
//! writes the same bytes as `run`.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::exposure::{run_stage1_with_masks, save_embeddings};
use crate::frame::{BoolMap, VideoVolume};
use crate::mask::{binarize_mask, compute_masks, SoftMask};
use crate::media_io::{
    load_cameras, load_depth_sequence, load_flow_set, load_frame_sequence, load_tensor4,
    quantize_16bit, save_frame_sequence, save_tensor4, CameraParams, DepthMap, FlowSet, Tensor4,
};
use crate::metrics::{psnr, video_ssim, warp_l1_metric, warp_ssim_metric, write_loss_curve, MetricsReport};
use crate::noise::{combine_noise_with_gamma, gamma_at};
use crate::uvt::{build_keys, gather, run_stage2_with_keys, scatter, DepthInput, KeyVolume};

pub const EMBEDDINGS_FILE: &str = "embeddings.txt";
pub const METRICS_FILE: &str = "metrics.csv";
pub const STAGE1_LOSS_FILE: &str = "stage1_loss.csv";
pub const STAGE2_LOSS_FILE: &str = "stage2_loss.csv";

/// Runs `f` on a dedicated pool with `threads` workers, or on the global
/// pool when `None`.
pub fn with_threads<T: Send>(
    threads: Option<usize>,
    f: impl FnOnce() -> Result<T> + Send,
) -> Result<T> {
    match threads {
        None => f(),
        Some(0) => Err(Error::Config("--threads must be at least 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Internal(format!("thread pool: {e}")))?
            .install(f),
    }
}

fn stage<T>(name: &'static str, r: Result<T>) -> Result<T> {
    r.map_err(|e| e.in_stage(name))
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Source video, flows, optional depth, and the masks derived from them.
struct SourceInputs {
    source: VideoVolume,
    flows: FlowSet,
    depth: Option<(Vec<DepthMap>, Vec<CameraParams>)>,
    masks: Vec<SoftMask>,
    binary: Vec<BoolMap>,
}

impl SourceInputs {
    fn load(cfg: &PipelineConfig) -> Result<Self> {
        let source_dir = cfg.require_dir("source_dir", &cfg.source_dir)?;
        let fwd = cfg.require_dir("flow_fwd_dir", &cfg.flow_fwd_dir)?;
        let bwd = cfg.require_dir("flow_bwd_dir", &cfg.flow_bwd_dir)?;
        let (source, flows, depth) = stage("ingest", {
            (|| {
                let source = load_frame_sequence(&source_dir, &cfg.frame_pattern)?;
                let flows = load_flow_set(&fwd, &bwd, source.len())?;
                flows.check_video(source.len(), source.dims())?;
                let depth = match (&cfg.depth_dir, &cfg.cameras) {
                    (Some(_), Some(_)) => {
                        let dir = cfg.require_dir("depth_dir", &cfg.depth_dir)?;
                        let cams = cfg.require_file("cameras", &cfg.cameras)?;
                        Some((load_depth_sequence(&dir, source.len())?, load_cameras(&cams)?))
                    }
                    _ => None,
                };
                Ok((source, flows, depth))
            })()
        })?;
        let masks = stage("masks", compute_masks(&source, &flows, &cfg.mask()))?;
        let binary = masks.iter().map(binarize_mask).collect();
        Ok(SourceInputs {
            source,
            flows,
            depth,
            masks,
            binary,
        })
    }

    fn keys(&self, cfg: &PipelineConfig) -> Result<Arc<KeyVolume>> {
        let depth = self.depth.as_ref().map(|(d, c)| DepthInput {
            depth: d,
            cameras: c,
        });
        let keys = stage(
            "uvt keys",
            build_keys(
                &self.source,
                self.flows.forward_all(),
                &self.binary,
                depth,
                &cfg.stage2().keys,
            ),
        )?;
        Ok(Arc::new(keys))
    }

    /// Loads a video that must match the source in length and resolution.
    fn load_matching(&self, key: &str, dir: &Path, pattern: &str) -> Result<VideoVolume> {
        let video = stage("ingest", load_frame_sequence(dir, pattern))?;
        if video.len() != self.source.len() || video.dims() != self.source.dims() {
            return Err(Error::invalid(format!(
                "{key} has {} frames of {:?}, source has {} of {:?}",
                video.len(),
                video.dims(),
                self.source.len(),
                self.source.dims()
            ))
            .in_stage("ingest"));
        }
        Ok(video)
    }

    fn relit(&self, cfg: &PipelineConfig) -> Result<VideoVolume> {
        let dir = cfg.require_dir("relit_dir", &cfg.relit_dir)?;
        self.load_matching("relit video", &dir, &cfg.frame_pattern)
    }
}

fn quantized(video: &VideoVolume) -> VideoVolume {
    video.map_frames(quantize_16bit)
}

/// Runs Stage I and writes `aligned/`, the embeddings and the loss curve.
fn stage1_and_save(cfg: &PipelineConfig, inputs: &SourceInputs, relit: &VideoVolume) -> Result<VideoVolume> {
    let result = stage(
        "stage1",
        run_stage1_with_masks(relit, &inputs.flows, &inputs.masks, &cfg.stage1()),
    )?;
    let aligned = quantized(&result.aligned);
    create_dir(&cfg.output_dir)?;
    stage("export", save_frame_sequence(&cfg.aligned_dir(), &aligned))?;
    stage(
        "export",
        save_embeddings(&cfg.output_dir.join(EMBEDDINGS_FILE), &result.embeddings),
    )?;
    if cfg.write_loss_curves {
        stage(
            "export",
            write_loss_curve(&cfg.output_dir.join(STAGE1_LOSS_FILE), "stage1", &result.loss_curve),
        )?;
    }
    Ok(aligned)
}

/// Runs Stage II and writes `final/`, the loss curve and the metrics.
fn stage2_and_save(
    cfg: &PipelineConfig,
    inputs: &SourceInputs,
    aligned: &VideoVolume,
    relit: Option<&VideoVolume>,
) -> Result<MetricsReport> {
    let keys = inputs.keys(cfg)?;
    let result = stage(
        "stage2",
        run_stage2_with_keys(aligned, keys.clone(), &inputs.flows, &inputs.masks, &cfg.stage2()),
    )?;
    let output = quantized(&result.output);
    create_dir(&cfg.output_dir)?;
    stage("export", save_frame_sequence(&cfg.final_dir(), &output))?;
    if cfg.write_loss_curves {
        stage(
            "export",
            write_loss_curve(&cfg.output_dir.join(STAGE2_LOSS_FILE), "stage2", &result.loss_curve),
        )?;
    }

    let mut report = MetricsReport::new();
    report.push("frames", inputs.source.len() as f64);
    report.push("uvt_elements", keys.len() as f64);
    report.push("compression_rate", keys.compression_rate());
    if cfg.compute_metrics {
        let score = |v: &VideoVolume| -> Result<(f64, f64)> {
            Ok((
                warp_ssim_metric(v, &inputs.flows, &inputs.binary)?,
                warp_l1_metric(v, &inputs.flows, &inputs.binary)?,
            ))
        };
        stage("metrics", (|| {
            if let Some(relit) = relit {
                let (s, l) = score(relit)?;
                report.push("input_warp_ssim", s);
                report.push("input_warp_l1", l);
            }
            let (s, l) = score(aligned)?;
            report.push("aligned_warp_ssim", s);
            report.push("aligned_warp_l1", l);
            let (s, l) = score(&output)?;
            report.push("final_warp_ssim", s);
            report.push("final_warp_l1", l);
            Ok(())
        })())?;
    }
    stage("export", report.write_csv(&cfg.output_dir.join(METRICS_FILE)))?;
    Ok(report)
}

/// Masks, Stage I, Stage II and export.
pub fn cmd_run(cfg: &PipelineConfig) -> Result<MetricsReport> {
    let inputs = SourceInputs::load(cfg)?;
    let relit = inputs.relit(cfg)?;
    let aligned = stage1_and_save(cfg, &inputs, &relit)?;
    stage2_and_save(cfg, &inputs, &aligned, Some(&relit))
}

/// Stage I only; writes `aligned/` and the embeddings.
pub fn cmd_stage1(cfg: &PipelineConfig) -> Result<MetricsReport> {
    let inputs = SourceInputs::load(cfg)?;
    let relit = inputs.relit(cfg)?;
    let aligned = stage1_and_save(cfg, &inputs, &relit)?;
    let mut report = MetricsReport::new();
    if cfg.compute_metrics {
        stage("metrics", (|| {
            report.push("input_warp_ssim", warp_ssim_metric(&relit, &inputs.flows, &inputs.binary)?);
            report.push("aligned_warp_ssim", warp_ssim_metric(&aligned, &inputs.flows, &inputs.binary)?);
            Ok(())
        })())?;
    }
    Ok(report)
}

/// Stage II on a previously written aligned sequence.
pub fn cmd_stage2(cfg: &PipelineConfig) -> Result<MetricsReport> {
    let inputs = SourceInputs::load(cfg)?;
    let aligned_dir = cfg.aligned_dir();
    if !aligned_dir.is_dir() {
        return Err(Error::Config(format!(
            "aligned frames not found at {}",
            aligned_dir.display()
        )));
    }
    let aligned = inputs.load_matching("aligned video", &aligned_dir, "*.png")?;
    let relit = match &cfg.relit_dir {
        Some(_) => Some(inputs.relit(cfg)?),
        None => None,
    };
    stage2_and_save(cfg, &inputs, &aligned, relit.as_ref())
}

/// Gathers and scatters the source video through its own keys and reports
/// how much is lost.
pub fn cmd_reconstruct(cfg: &PipelineConfig, dump_uvt: bool) -> Result<MetricsReport> {
    let inputs = SourceInputs::load(cfg)?;
    let keys = inputs.keys(cfg)?;
    let uvt = stage("reconstruct", gather(&inputs.source, keys.clone()))?;
    let recon = scatter(&uvt);
    let mut report = MetricsReport::new();
    report.push("uvt_elements", keys.len() as f64);
    report.push("compression_rate", keys.compression_rate());
    stage("metrics", (|| {
        report.push("psnr", psnr(&recon, &inputs.source)?);
        report.push("ssim", video_ssim(&recon, &inputs.source)?);
        Ok(())
    })())?;

    create_dir(&cfg.output_dir)?;
    stage(
        "export",
        report.write_csv(&cfg.output_dir.join("reconstruct_metrics.csv")),
    )?;
    if dump_uvt {
        let n = uvt.len();
        let values = Tensor4::from_fn([1, 3, 1, n], |[_, c, _, x]| uvt.element(x)[c] as f32)?;
        stage("export", save_tensor4(cfg.output_dir.join("uvt_values.t4"), &values))?;
        let (h, w) = recon.dims();
        let frames = Tensor4::from_fn([recon.len(), 3, h, w], |[t, c, y, x]| {
            recon.frame(t).get(x, y, c) as f32
        })?;
        stage("export", save_tensor4(cfg.output_dir.join("reconstruction.t4"), &frames))?;
    }
    Ok(report)
}

/// Warp metrics for an arbitrary video against the source flows and masks.
pub fn cmd_metrics(cfg: &PipelineConfig) -> Result<MetricsReport> {
    let inputs = SourceInputs::load(cfg)?;
    let dir = cfg
        .metrics_video_dir
        .clone()
        .unwrap_or_else(|| cfg.final_dir());
    if !dir.is_dir() {
        return Err(Error::Config(format!("no video to score at {}", dir.display())));
    }
    let video = inputs.load_matching("scored video", &dir, "*.png")?;
    let mut report = MetricsReport::new();
    stage("metrics", (|| {
        report.push("warp_ssim", warp_ssim_metric(&video, &inputs.flows, &inputs.binary)?);
        report.push("warp_l1", warp_l1_metric(&video, &inputs.flows, &inputs.binary)?);
        report.push("psnr_vs_source", psnr(&video, &inputs.source)?);
        Ok(())
    })())?;
    create_dir(&cfg.output_dir)?;
    stage("export", report.write_csv(&cfg.output_dir.join("eval_metrics.csv")))?;
    Ok(report)
}

/// Reads two noise tensors, blends them at `noise_step` and writes the
/// result.
pub fn cmd_noise_combine(cfg: &PipelineConfig) -> Result<MetricsReport> {
    let xy = cfg.require_file("noise_xy", &cfg.noise_xy)?;
    let yt = cfg.require_file("noise_yt", &cfg.noise_yt)?;
    let out: PathBuf = cfg
        .noise_out
        .clone()
        .unwrap_or_else(|| cfg.output_dir.join("noise_combined.t4"));
    let (eps_xy, eps_yt) = stage("ingest", (|| Ok((load_tensor4(&xy)?, load_tensor4(&yt)?)))())?;
    let gamma = gamma_at(&cfg.gamma(), cfg.noise_step)?;
    let combined = stage(
        "noise",
        combine_noise_with_gamma(&eps_xy, &eps_yt, gamma, cfg.swap_weights),
    )?;
    if let Some(parent) = out.parent() {
        create_dir(parent)?;
    }
    stage("export", save_tensor4(&out, &combined))?;
    let mut report = MetricsReport::new();
    report.push("gamma", gamma);
    Ok(report)
}
